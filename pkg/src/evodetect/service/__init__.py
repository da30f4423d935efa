"""HTTP service: a FastAPI app over an event-sourced detector core."""

from .app import create_app
from .config import (
    ServiceConfig,
    load_service_config,
    service_config_from_dict,
    service_config_to_dict,
)
from .core import ServiceCore, ServiceError

__all__ = [
    "ServiceConfig",
    "ServiceCore",
    "ServiceError",
    "create_app",
    "load_service_config",
    "service_config_from_dict",
    "service_config_to_dict",
]
