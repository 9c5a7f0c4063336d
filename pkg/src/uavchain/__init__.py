"""uavchain - deterministic simulator of blockchain-assisted UAV relay networks."""

from uavchain.core.config import Scheme, SimConfig, default_config, load_config
from uavchain.core.engine import rng_stream, run
from uavchain.core.metrics import MetricsReport, delivery_success_rate, total_messages

__version__ = "1.0.0"
__all__ = [
    "MetricsReport",
    "Scheme",
    "SimConfig",
    "__version__",
    "default_config",
    "delivery_success_rate",
    "load_config",
    "rng_stream",
    "run",
    "total_messages",
]
