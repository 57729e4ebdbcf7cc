"""Benchmark configuration: JSON schema, profiles, and model construction.

Top-level JSON keys: protocol, n, f_model, clients, payload_bytes, latency,
cpu, delta, epoch, seed, horizon, faults[], output.  CLI flags mirror these
fields and override file values.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .auth import make_authenticator
from .engine import EngineContext
from .faults import Behavior, FaultPlan, FaultSpec
from .hotstuff import HotStuffParams
from .netmodels import (Constant, CpuCostModel, DEFAULT_CPU, LatencyModel,
                        RegionMatrix, UniformJitter, WAN_REGIONS, lan_latency,
                        wan_delay_matrix, wan_latency)
from .paxos import PaxosParams
from .pbft import PbftParams
from .registry import protocol_info
from .snowball import SnowballParams, SnowMode
from .streamlet import StreamletParams
from .tendermint import TendermintParams
from .types import ConfigurationError, FaultModel, quorum_sizes
from .workload import (ClosedLoopWorkload, ColorSeedWorkload, OpenLoopWorkload,
                       split_colors)

LAN_DELTA, WAN_DELTA = 2.0, 50.0
LAN_EPOCH, WAN_EPOCH = 3.0, 50.0
WAN_TIMEOUT_SCALE = 25.0


@dataclass
class BenchConfig:
    protocol: str = "paxos"
    n: int = 4
    f_model: str | None = None          # crash | byzantine (default per protocol)
    clients: int = 1
    payload_bytes: int = 16
    latency: object = "lan"             # lan | wan | {constant|jitter|matrix...}
    cpu: object = "default"             # default | zero | {per_message, per_byte}
    delta: float | None = None
    epoch: float | None = None
    seed: int = 0
    horizon: float = 100.0
    faults: list[dict] = field(default_factory=list)
    output: str | None = None
    # optional extras (not part of the fixed top-level schema)
    request_rate: float | None = None   # open-loop when set
    auth: str = "noop"
    max_requests: int | None = None
    client_retry: float | None = 60.0
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str | Path) -> "BenchConfig":
        data = json.loads(Path(path).read_text())
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- derived pieces

    def fault_model(self) -> FaultModel:
        if self.f_model is not None:
            return FaultModel(self.f_model)
        return protocol_info(self.protocol).fault_model

    def is_wan(self) -> bool:
        return self.latency == "wan"

    def delta_value(self) -> float:
        if self.delta is not None:
            return self.delta
        return WAN_DELTA if self.is_wan() else LAN_DELTA

    def epoch_value(self) -> float:
        if self.epoch is not None:
            return self.epoch
        return WAN_EPOCH if self.is_wan() else LAN_EPOCH

    def timeout_scale(self) -> float:
        return WAN_TIMEOUT_SCALE if self.is_wan() else 1.0

    def build_latency(self) -> LatencyModel:
        spec = self.latency
        if spec == "lan":
            return lan_latency()
        if spec == "wan":
            return wan_latency(self.n)
        if isinstance(spec, dict):
            if "constant" in spec:
                return Constant(float(spec["constant"]))
            if "jitter" in spec:
                lo, hi = spec["jitter"]
                return UniformJitter(float(lo), float(hi))
            if "matrix" in spec:
                delays = {(a, b): float(d)
                          for a, rest in spec["matrix"].items()
                          for b, d in rest.items()}
                regions = spec.get("regions")
                if regions is None:
                    node_region = {i: WAN_REGIONS[i % len(WAN_REGIONS)]
                                   for i in range(self.n)}
                else:
                    node_region = {int(i): r for i, r in regions.items()}
                return RegionMatrix(node_region, delays)
        raise ConfigurationError(f"bad latency spec: {spec!r}")

    def build_cpu(self) -> CpuCostModel:
        spec = self.cpu
        if spec == "default":
            return DEFAULT_CPU
        if spec == "zero":
            return CpuCostModel(0.0, 0.0)
        if isinstance(spec, dict):
            return CpuCostModel(per_message=float(spec.get("per_message", 0.0)),
                                per_byte=float(spec.get("per_byte", 0.0)))
        raise ConfigurationError(f"bad cpu spec: {spec!r}")

    def build_faults(self) -> FaultPlan:
        entries = []
        for item in self.faults:
            entries.append(FaultSpec(node=int(item["node"]),
                                     behavior=Behavior(item["behavior"]),
                                     at=float(item.get("at", 0.0)),
                                     extra_delay=float(item.get("extra_delay", 0.0))))
        for spec in entries:
            if not 0 <= spec.node < self.n:
                raise ConfigurationError(f"fault names node {spec.node} outside roster")
        return FaultPlan(tuple(entries))

    def build_params(self):
        scale = self.timeout_scale()
        extra = dict(self.params)
        proto = self.protocol
        if proto == "paxos":
            return PaxosParams(
                retransmit_timeout=extra.get("retransmit_timeout", 40.0 * scale),
                election_timeout=extra.get("election_timeout", 15.0 * scale),
                backoff_base=extra.get("backoff_base", 5.0 * scale))
        if proto == "pbft":
            return PbftParams(view_timeout=extra.get("view_timeout", 25.0 * scale))
        if proto in ("tendermint", "tendermint_star"):
            stakes = extra.get("stakes")
            return TendermintParams(
                delta=extra.get("delta", self.delta_value()),
                proposal_timeout=extra.get("proposal_timeout", 10.0 * scale),
                star=(proto == "tendermint_star"),
                stakes=tuple(stakes) if stakes else None)
        if proto in ("hotstuff", "hotstuff_unchained"):
            return HotStuffParams(view_timeout=extra.get("view_timeout", 20.0 * scale))
        if proto == "streamlet":
            return StreamletParams(
                epoch_duration=extra.get("epoch_duration", self.epoch_value()))
        if proto == "snowball":
            return SnowballParams(
                k=extra.get("k", 10),
                alpha_fraction=extra.get("alpha", 0.8),
                beta=extra.get("beta", 15),
                mode=SnowMode(extra.get("mode", "snowball")),
                m_rounds=extra.get("m_rounds", 30),
                query_timeout=extra.get("query_timeout", 50.0 * scale))
        raise ConfigurationError(f"unknown protocol {proto!r}")

    def build_engine_factory(self):
        info = protocol_info(self.protocol)
        quorum = quorum_sizes(self.n, self.fault_model())
        params = self.build_params()
        auth = make_authenticator(self.auth, run_key=b"run%d" % self.seed)
        roster = tuple(range(self.n))
        seed = self.seed

        def factory(node_id: int):
            ctx = EngineContext(node_id=node_id, roster=roster, quorum=quorum,
                                auth=auth, seed=seed, params=params)
            return info.engine_cls(ctx)

        return factory

    def replies_needed(self) -> int:
        info = protocol_info(self.protocol)
        if info.replies_needed == "one":
            return 1
        quorum = quorum_sizes(self.n, self.fault_model())
        return quorum.f + 1

    def build_workload(self):
        if self.protocol == "snowball":
            split = float(self.params.get("initial_split", 0.6))
            return ColorSeedWorkload(split_colors(self.n, split))
        if self.clients <= 0:
            return None
        info = protocol_info(self.protocol)
        if self.request_rate is not None:
            return OpenLoopWorkload(self.clients, self.request_rate,
                                    needed_replies=self.replies_needed(),
                                    payload_bytes=self.payload_bytes,
                                    horizon=self.horizon)
        return ClosedLoopWorkload(self.clients,
                                  needed_replies=self.replies_needed(),
                                  routing=info.routing,
                                  payload_bytes=self.payload_bytes,
                                  max_requests=self.max_requests,
                                  retry_after=self.client_retry)
