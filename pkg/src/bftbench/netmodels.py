"""Latency and CPU-cost models for the simulated network.

The CPU model charges serialization cost at the sender and deserialization
cost at the receiver; with the default parameters that cost, not link
bandwidth, is what saturates a busy leader first.
"""

from __future__ import annotations

import random
from abc import ABC, abstractmethod
from dataclasses import dataclass

from .types import ConfigurationError


class LatencyModel(ABC):
    @abstractmethod
    def delay(self, src: int, dst: int, rng: random.Random) -> float: ...

    @abstractmethod
    def min_delay(self) -> float: ...


class Constant(LatencyModel):
    def __init__(self, d: float):
        if d <= 0:
            raise ConfigurationError("delay must be > 0")
        self.d = d

    def delay(self, src: int, dst: int, rng: random.Random) -> float:
        return self.d

    def min_delay(self) -> float:
        return self.d


class UniformJitter(LatencyModel):
    def __init__(self, lo: float, hi: float):
        if lo <= 0 or hi < lo:
            raise ConfigurationError("jitter bounds must satisfy 0 < lo <= hi")
        self.lo = lo
        self.hi = hi

    def delay(self, src: int, dst: int, rng: random.Random) -> float:
        return rng.uniform(self.lo, self.hi)

    def min_delay(self) -> float:
        return self.lo


class RegionMatrix(LatencyModel):
    """One-way delay by (region, region); addresses missing from the map
    (e.g. clients) fall back to ``default_region``."""

    def __init__(self, node_region: dict[int, str],
                 delays: dict[tuple[str, str], float],
                 default_region: str | None = None):
        regions = sorted(set(node_region.values()) | {r for pair in delays for r in pair})
        for a in regions:
            for b in regions:
                if (a, b) not in delays:
                    raise ConfigurationError(f"latency matrix missing pair {(a, b)}")
        if any(d <= 0 for d in delays.values()):
            raise ConfigurationError("all delays must be > 0")
        self.node_region = dict(node_region)
        self.delays = dict(delays)
        self.default_region = default_region or regions[0]

    def _region(self, addr: int) -> str:
        return self.node_region.get(addr, self.default_region)

    def delay(self, src: int, dst: int, rng: random.Random) -> float:
        return self.delays[(self._region(src), self._region(dst))]

    def min_delay(self) -> float:
        return min(self.delays.values())


@dataclass(frozen=True)
class CpuCostModel:
    """Simulated CPU time charged per envelope, on both serialize and
    deserialize: ``per_message + per_byte * size``."""

    per_message: float = 0.0
    per_byte: float = 0.0

    def __post_init__(self):
        if self.per_message < 0 or self.per_byte < 0:
            raise ConfigurationError("CPU costs must be >= 0")

    def cost(self, nbytes: int) -> float:
        return self.per_message + self.per_byte * nbytes


ZERO_CPU = CpuCostModel(0.0, 0.0)

# LAN profile: one-way delay and CPU costs in abstract time units.  Chosen so
# that a 9-node PBFT leader saturates on serialization work well before the
# 0.25-unit links matter.
LAN_DELAY = 0.25
DEFAULT_CPU = CpuCostModel(per_message=0.001, per_byte=0.0004)

# WAN profile: representative one-way delays between the four evaluation
# regions (config-overridable estimates, not measurements).
WAN_REGIONS = ("virginia", "ohio", "oregon", "california")
_WAN_ONE_WAY = {
    ("virginia", "virginia"): 0.5,
    ("ohio", "ohio"): 0.5,
    ("oregon", "oregon"): 0.5,
    ("california", "california"): 0.5,
    ("virginia", "ohio"): 6.0,
    ("virginia", "oregon"): 33.0,
    ("virginia", "california"): 30.0,
    ("ohio", "oregon"): 25.0,
    ("ohio", "california"): 25.0,
    ("oregon", "california"): 10.0,
}


def wan_delay_matrix() -> dict[tuple[str, str], float]:
    full = {}
    for (a, b), d in _WAN_ONE_WAY.items():
        full[(a, b)] = d
        full[(b, a)] = d
    return full


def lan_latency() -> Constant:
    return Constant(LAN_DELAY)


def wan_latency(n: int) -> RegionMatrix:
    node_region = {i: WAN_REGIONS[i % len(WAN_REGIONS)] for i in range(n)}
    return RegionMatrix(node_region, wan_delay_matrix())
