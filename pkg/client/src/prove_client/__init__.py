"""Training-loop client SDK for the provekit reward service."""

from prove_client.client import (
    DEFAULT_BASE_URL,
    ClientConfig,
    GroupScores,
    RewardParts,
    RewardServiceClient,
    ValidationResult,
    Violation,
)
from prove_client.errors import ClientError, SchemaError, TransportError

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_BASE_URL",
    "ClientConfig",
    "ClientError",
    "GroupScores",
    "RewardParts",
    "RewardServiceClient",
    "SchemaError",
    "TransportError",
    "ValidationResult",
    "Violation",
    "__version__",
]
