from typing import Union
import functools
import re

from pydantic import BaseModel, ConfigDict, field_validator, model_validator


_KIND_ORDER = {"fin": 0, "omega": 1, "infty": 2}


@functools.total_ordering
class Ordinal(BaseModel):
    """Rank values: finite naturals, ω·a+b with a ≥ 1, and ∞.

    Use the helpers `Fin`, `Omega` and the constant `Infty` rather than the
    constructor.
    """

    model_config = ConfigDict(frozen=True)

    kind: str = "fin"
    a: int = 0
    b: int = 0

    @field_validator("kind")
    @classmethod
    def kind_is_known(cls, v):
        if v not in _KIND_ORDER:
            raise ValueError(f"Invalid ordinal kind {v}")
        return v

    @model_validator(mode="after")
    def coefficients_in_range(self):
        if self.a < 0 or self.b < 0:
            raise ValueError(f"Invalid ordinal coefficients ({self.a}, {self.b})")
        if self.kind == "fin" and self.a != 0:
            raise ValueError("Finite ordinals carry no omega coefficient")
        if self.kind == "omega" and self.a < 1:
            raise ValueError("Omega terms need a >= 1")
        if self.kind == "infty" and (self.a or self.b):
            raise ValueError("Infty carries no coefficients")
        return self

    @property
    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.a, self.b)

    def __eq__(self, other):
        if not isinstance(other, Ordinal):
            return NotImplemented
        return self.sort_key == other.sort_key

    def __hash__(self):
        return hash(self.sort_key)

    def __lt__(self, other):
        if not isinstance(other, Ordinal):
            return NotImplemented
        return self.sort_key < other.sort_key

    @property
    def is_finite(self) -> bool:
        return self.kind == "fin"

    @property
    def is_infty(self) -> bool:
        return self.kind == "infty"

    @property
    def value(self) -> int:
        if not self.is_finite:
            raise ValueError(f"{self} is not finite")
        return self.b

    def successor(self) -> "Ordinal":
        if self.is_infty:
            return self
        return self.model_copy(update={"b": self.b + 1})

    def __add__(self, other: Union["Ordinal", int]) -> "Ordinal":
        if isinstance(other, int):
            other = Fin(other)
        if self.is_infty or other.is_infty:
            return Infty
        if other.kind == "fin":
            return self.model_copy(update={"b": self.b + other.b})
        if self.kind == "fin":
            return other
        return Omega(self.a + other.a, other.b)

    def __str__(self):
        if self.kind == "fin":
            return f"Fin {self.b}"
        elif self.kind == "omega":
            return f"w*{self.a}+{self.b}"
        return "infty"

    def __repr__(self):
        return str(self)

    @classmethod
    def parse(cls, s: str) -> "Ordinal":
        s = s.strip()
        if s in ("infty", "Infty", "inf"):
            return Infty
        m = re.fullmatch(r"(?:Fin\s+)?(\d+)", s)
        if m:
            return Fin(int(m.group(1)))
        m = re.fullmatch(r"w\*(\d+)\+(\d+)", s)
        if m:
            return Omega(int(m.group(1)), int(m.group(2)))
        raise ValueError(f"Invalid ordinal string {s!r}")


def Fin(n: int) -> Ordinal:
    return Ordinal(kind="fin", b=n)


def Omega(a: int, b: int = 0) -> Ordinal:
    return Ordinal(kind="omega", a=a, b=b)


Infty = Ordinal(kind="infty")
