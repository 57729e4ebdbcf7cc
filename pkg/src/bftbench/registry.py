"""Protocol registry: names to engine classes and their client conventions."""

from __future__ import annotations

from dataclasses import dataclass

from .engine import Engine
from .hotstuff import HotStuffEngine, HotStuffParams, HotStuffUnchainedEngine
from .paxos import PaxosEngine, PaxosParams
from .pbft import PbftEngine, PbftParams
from .snowball import SnowballEngine, SnowballParams
from .streamlet import StreamletEngine, StreamletParams
from .tendermint import TendermintEngine, TendermintParams, TendermintStarEngine
from .types import FaultModel


@dataclass(frozen=True)
class ProtocolInfo:
    engine_cls: type[Engine]
    params_cls: type
    fault_model: FaultModel
    replies_needed: str  # "one" | "f+1" | "none"
    routing: str         # client request routing: "broadcast" | "leader"


PROTOCOLS: dict[str, ProtocolInfo] = {
    "paxos": ProtocolInfo(PaxosEngine, PaxosParams, FaultModel.CRASH,
                          "one", "broadcast"),
    "pbft": ProtocolInfo(PbftEngine, PbftParams, FaultModel.BYZANTINE,
                         "f+1", "leader"),
    "tendermint": ProtocolInfo(TendermintEngine, TendermintParams,
                               FaultModel.BYZANTINE, "f+1", "broadcast"),
    "tendermint_star": ProtocolInfo(TendermintStarEngine, TendermintParams,
                                    FaultModel.BYZANTINE, "f+1", "broadcast"),
    "hotstuff": ProtocolInfo(HotStuffEngine, HotStuffParams,
                             FaultModel.BYZANTINE, "f+1", "broadcast"),
    "hotstuff_unchained": ProtocolInfo(HotStuffUnchainedEngine, HotStuffParams,
                                       FaultModel.BYZANTINE, "f+1", "broadcast"),
    "streamlet": ProtocolInfo(StreamletEngine, StreamletParams,
                              FaultModel.BYZANTINE, "f+1", "broadcast"),
    "snowball": ProtocolInfo(SnowballEngine, SnowballParams,
                             FaultModel.BYZANTINE, "none", "broadcast"),
}


def protocol_info(name: str) -> ProtocolInfo:
    info = PROTOCOLS.get(name)
    if info is None:
        raise KeyError(f"unknown protocol {name!r}; choose from "
                       f"{', '.join(sorted(PROTOCOLS))}")
    return info
