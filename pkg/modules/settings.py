import dataclasses
import logging
import os
from typing import Any, Dict, Type, TypeVar

from modules.errors import ConfigError, DiRecError

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

THREADS_ENV = "DIRECGNN_THREADS"

T = TypeVar("T", bound="ConfigMixin")


class ConfigMixin:
    """
    Dict round-tripping for the config dataclasses.

    Keys mirror field names. Unknown keys are rejected so typos in a run
    config fail loudly instead of silently falling back to defaults.
    """

    @classmethod
    def from_dict(cls: Type[T], data: Dict[str, Any], base: T = None) -> T:
        """
        Build a config from a dict, starting from ``base`` (or the class defaults).

        Args:
            data: field name -> value
            base: optional config whose values are overridden

        Returns:
            a new config instance

        Raises:
            ConfigError: unknown key or a value __post_init__ rejects
        """
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{cls.__name__} section must be a JSON object, got {type(data).__name__}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"Unknown {cls.__name__} key(s): {', '.join(unknown)}")

        values = base.to_dict() if base is not None else {}
        values.update(data)
        for field in dataclasses.fields(cls):
            if field.name in values and isinstance(values[field.name], list) and "Tuple" in str(field.type):
                values[field.name] = tuple(values[field.name])
        try:
            return cls(**values)
        except DiRecError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid {cls.__name__}: {str(e)}")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self: T, **changes) -> T:
        return self.from_dict(changes, base=self)


def worker_threads() -> int:
    """Worker thread cap from DIRECGNN_THREADS (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    default = os.cpu_count() or 1
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1, got {value}")
    return value
