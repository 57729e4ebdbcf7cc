"""bftbench: a deterministic multi-protocol BFT consensus workbench."""

from .types import (Block, Command, FaultModel, MessageEnvelope,
                    QuorumCertificate, QuorumConfig, Vote, VoteKind,
                    quorum_sizes)

__version__ = "0.1.0"

__all__ = ["Block", "Command", "FaultModel", "MessageEnvelope",
           "QuorumCertificate", "QuorumConfig", "Vote", "VoteKind",
           "quorum_sizes", "__version__"]
