"""Experiment configuration schemas (unknown keys are rejected)."""
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

__all__ = [
    "ExperimentConfig",
    "LatticeConfig",
    "SsfConfig",
    "TransformConfig",
    "ExampleConfig",
    "CliffordConfig",
    "DEFAULT_TOLERANCES",
    "validate",
]

DEFAULT_TOLERANCES = {
    "clifford": 1e-12,
    "trace_relgap": 0.1,
    "schlafli": 1e-8,
    "winding_integer": 1e-2,
    "index_density": 0.05,
    "index_pipeline": 0.10,
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _odd(v, name="d"):
    if v < 1 or v % 2 == 0:
        raise ValueError(f"{name} must be an odd positive integer, got {v}")
    return v


class CliffordConfig(_Strict):
    d: list[int] = Field(default_factory=lambda: [3])

    @field_validator("d")
    @classmethod
    def _check(cls, v):
        return [_odd(x) for x in v]


_FAMILY_KEYS = {
    "constant": {"mu"},
    "hedgehog": {"mu"},
    "bumps": {"seed", "count", "amplitude", "width", "spread", "a0"},
}


class PotentialBlock(_Strict):
    family: Literal["constant", "hedgehog", "bumps"]
    mu: Optional[float] = None
    seed: Optional[int] = None
    count: Optional[int] = None
    amplitude: Optional[float] = None
    width: Optional[float] = None
    spread: Optional[float] = None
    a0: Optional[float] = None

    @model_validator(mode="after")
    def _keys(self):
        given = {k for k, v in self.model_dump().items() if v is not None} - {"family"}
        extra = given - _FAMILY_KEYS[self.family]
        if extra:
            raise ValueError(f"family {self.family!r} does not take {sorted(extra)}")
        return self

    def as_spec(self):
        return {k: v for k, v in self.model_dump().items() if v is not None}


class PhiBlock(_Strict):
    inner: float = 0.5
    outer: float = 1.5

    @model_validator(mode="after")
    def _order(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("phi needs 0 < inner < outer")
        return self


class LatticeConfig(_Strict):
    d: int
    N: int = Field(ge=2)
    h: float = Field(gt=0)
    m: int = Field(ge=1)
    potential: PotentialBlock
    phi: PhiBlock = Field(default_factory=PhiBlock)
    t_list: list[float] = Field(default_factory=list)
    cap: int = Field(default=4096, ge=1)
    rhs_points: Optional[int] = Field(default=None, ge=2)

    @field_validator("d")
    @classmethod
    def _d(cls, v):
        return _odd(v)

    @field_validator("t_list")
    @classmethod
    def _t(cls, v):
        if any(t <= 0 for t in v):
            raise ValueError("t values must be positive")
        return v

    @model_validator(mode="after")
    def _cap(self):
        dim = self.N ** self.d * 2 ** ((self.d - 1) // 2) * self.m
        if dim > self.cap:
            raise ValueError(f"operator dimension {dim} exceeds cap {self.cap}")
        return self

    def as_model_dict(self):
        out = self.model_dump()
        out["potential"] = self.potential.as_spec()
        out.pop("rhs_points")
        return out


Number = Union[float, list[float]]  # real, or [re, im]


class FunctionBlock(_Strict):
    kind: Literal["exponential", "monomial", "polynomial", "gaussian_tail"] = "exponential"
    t: Optional[float] = None
    k: Optional[int] = None
    coeffs: Optional[list[float]] = None


class SsfConfig(_Strict):
    n: int = Field(ge=1)
    A: list[list[Number]]
    T0: Optional[list[list[Number]]] = None
    T: list[list[list[Number]]]

    @model_validator(mode="after")
    def _count(self):
        if len(self.T) != self.n:
            raise ValueError(f"T must hold n = {self.n} matrices, got {len(self.T)}")
        return self


class GridSpec(_Strict):
    start: float = 0.0
    stop: float
    num: int = Field(ge=1)


class TransformConfig(_Strict):
    eta: str
    d: int
    mode: Literal["xi", "witten"] = "xi"
    grid: Optional[GridSpec] = None

    @field_validator("d")
    @classmethod
    def _d(cls, v):
        return _odd(v)


class ExampleConfig(_Strict):
    potential: Literal["hedgehog", "scalar", "zero"] = "hedgehog"
    method: Literal["winding", "density", "pipeline", "kernels", "all"] = "all"
    d: int = 3
    samples: int = Field(default=65536, ge=1)
    integrator: Literal["mc", "grid"] = "mc"
    grid_points: int = Field(default=8, ge=2)
    winding_n: int = Field(default=96, ge=8)
    winding_L: float = Field(default=6.0, gt=0)

    @field_validator("d")
    @classmethod
    def _d(cls, v):
        if v != 3:
            raise ValueError("the built-in example families are three-dimensional")
        return v


_REQUIRED = {
    "clifford-check": ("clifford",),
    "ssf": ("ssf",),
    "trace-compare": ("lattice",),
    "transform": ("transform",),
    "example": ("example",),
    "full-pipeline": ("lattice", "example"),
}


class ExperimentConfig(_Strict):
    kind: Literal["clifford-check", "ssf", "trace-compare", "transform", "example", "full-pipeline"]
    seed: int = 0
    output_dir: str = "out"
    tolerances: dict[str, float] = Field(default_factory=dict)
    clifford: Optional[CliffordConfig] = None
    ssf: Optional[SsfConfig] = None
    lattice: Optional[LatticeConfig] = None
    transform: Optional[TransformConfig] = None
    example: Optional[ExampleConfig] = None

    @field_validator("tolerances")
    @classmethod
    def _tol(cls, v):
        unknown = set(v) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerance keys {sorted(unknown)}")
        return v

    @model_validator(mode="after")
    def _blocks(self):
        missing = [b for b in _REQUIRED[self.kind] if getattr(self, b) is None]
        if missing:
            raise ValueError(f"kind {self.kind!r} needs block(s) {missing}")
        return self

    def tolerance(self, key):
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])


def validate(raw):
    """List of ``{"field", "message"}`` issues; empty when the config is valid."""
    try:
        ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        issues = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            issues.append({"field": loc, "message": err["msg"]})
        return issues
    return []
