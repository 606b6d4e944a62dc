from typing import Dict, List, Optional, Any
from functools import wraps
import os

from pydantic import BaseModel, field_validator

from scottrank.constants import (
    DEFAULT_CAP_UNIVERSE,
    DEFAULT_CAP_TUPLE,
    DEFAULT_CAP_BUILD,
    DEFAULT_ZK,
    DEFAULT_MARGIN,
    CAP_ENV_VARS,
)

CAPS = None


class Caps(BaseModel):
    universe: int = DEFAULT_CAP_UNIVERSE
    tuple_space: int = DEFAULT_CAP_TUPLE
    build: int = DEFAULT_CAP_BUILD
    zk: int = DEFAULT_ZK
    margin: int = DEFAULT_MARGIN

    @field_validator("universe", "tuple_space", "build", "zk")
    @classmethod
    def cap_is_positive(cls, v):
        if v < 1:
            raise ValueError(f"Invalid cap {v}: caps must be positive")
        return v

    @field_validator("margin")
    @classmethod
    def margin_is_natural(cls, v):
        if v < 0:
            raise ValueError(f"Invalid margin {v}")
        return v

    def doubled_zk(self) -> "Caps":
        return self.model_copy(update={"zk": 2 * self.zk})

    def for_builds(self) -> "Caps":
        """Caps for oracles run on constructed structures, whose size is
        bounded by `build` rather than `universe`."""
        return self.model_copy(update={"universe": max(self.universe, self.build)})


class RunConfig(BaseModel):
    command: str
    inputs: List[str] = []
    caps: Caps = Caps()
    truncate: int = 2
    format: str = "text"
    seed: int = 0
    options: Dict[str, Any] = {}

    @field_validator("format")
    @classmethod
    def format_is_known(cls, v):
        if v not in ("text", "json"):
            raise ValueError(f"Invalid output format {v}")
        return v

    @field_validator("truncate")
    @classmethod
    def truncate_is_positive(cls, v):
        if v < 1:
            raise ValueError(f"Invalid truncation {v}")
        return v


def config(**caps):
    """Set process-wide caps, e.g. `scottrank.config(universe=9)`.
    Calling it without arguments restores the defaults."""
    global CAPS
    CAPS = Caps(**caps) if caps else None


def _caps_from_env() -> Dict[str, int]:
    found = {}
    for field, var in CAP_ENV_VARS.items():
        if os.environ.get(var) is not None:
            found[field] = int(os.environ.get(var))
    return found


def _load_caps(caps: Optional[Caps] = None) -> Caps:
    if caps is not None:
        return caps
    elif CAPS is not None:
        return CAPS
    else:
        return Caps(**_caps_from_env())


def use_caps(func):
    @wraps(func)
    def wrapper(*args, **kwargs):
        caps = _load_caps(kwargs.pop("caps", None))
        return func(*args, caps=caps, **kwargs)

    return wrapper
