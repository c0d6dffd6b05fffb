import math
import re
from typing import Callable, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.ball import BallConfig, RadialSource
from models.errors import UsageError

_M0_TOKEN = re.compile(r"^\s*([0-9.eE+-]*)\s*m0\s*$")


def _parse_m_token(token: str, m0: Optional[Callable[[], float]]) -> float:
    match = _M0_TOKEN.match(token)
    if match:
        if m0 is None:
            return float("nan")
        factor = match.group(1)
        try:
            return (float(factor) if factor else 1.0) * m0()
        except ValueError as e:
            raise UsageError(f"Bad m0 multiple '{token}'") from e
    try:
        value = float(token)
    except ValueError as e:
        raise UsageError(f"Bad m value '{token}'") from e
    if not math.isfinite(value):
        raise UsageError(f"m value must be finite, got '{token}'")
    return value


def parse_m_expression(text: str, m0: Optional[Callable[[], float]] = None) -> list[float]:
    """Expand an m expression: ``1.5``, ``2m0``, ``0.5m0,1,10`` or ``log:1.01m0:1e6:40``.

    ``m0`` is called lazily to resolve m0-relative tokens; without it they parse as NaN
    (syntax check only).
    """
    text = text.strip()
    if not text:
        raise UsageError("Empty m expression")
    if text.startswith("log:"):
        parts = text.split(":")
        if len(parts) != 4:
            raise UsageError(f"Log grid must read log:<start>:<stop>:<count>, got '{text}'")
        start, stop = _parse_m_token(parts[1], m0), _parse_m_token(parts[2], m0)
        try:
            count = int(parts[3])
        except ValueError as e:
            raise UsageError(f"Bad grid count in '{text}'") from e
        if count < 1:
            raise UsageError(f"Grid count must be >= 1, got {count}")
        if math.isnan(start) or math.isnan(stop):
            return [float("nan")] * count
        if not (start > 0 and stop > 0):
            raise UsageError(f"Log grid endpoints must be positive in '{text}'")
        return [float(v) for v in np.geomspace(start, stop, count)]
    return [_parse_m_token(token, m0) for token in text.split(",") if token.strip()]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Literal["energy-ball", "stability", "eigen", "fem-verify"] = Field(
        ..., description="Experiment to run."
    )
    n: int = Field(2, ge=2, description="Ball dimension.")
    R: float = Field(1.0, gt=0, description="Ball radius.")
    f: list[float] = Field(default_factory=lambda: [1.0], description="Source coefficients c_0, c_1, ... of f(r).")
    m: Optional[str] = Field(None, description="m expression (number, m0 multiple, comma list or log grid).")
    m_grid: Optional[str] = Field(None, description="m expression used for sweeps.")
    s_max: int = Field(12, ge=1, description="Largest mode in mode tables.")
    trials: int = Field(20, ge=1, description="Random harmonic functions in the trace inequality check.")
    fs: bool = Field(False, description="Emit f_s and disk mode-form tables.")
    problem: Literal["energy", "eigen", "eigen-fd"] = Field("energy", description="FEM cross-check to run.")
    s: int = Field(2, ge=1, description="Perturbation mode of the FEM family.")
    a: float = Field(1.0, description="Perturbation amplitude.")
    t: float = Field(0.0, description="Deformation used for mesh dumps.")
    n_r: int = Field(48, ge=8, description="FEM radial rings.")
    n_theta: int = Field(192, ge=16, description="FEM angular nodes.")
    dt: float = Field(0.02, ge=1e-3, le=5e-2, description="Finite-difference step in t.")
    order: Literal[2, 4] = Field(2, description="2: three-point stencil, 4: Richardson-combined.")
    output_format: Literal["json", "csv"] = Field("json", description="Report format.")
    output: Optional[str] = Field(None, description="Report path; stdout when absent.")
    dump_mesh: Optional[str] = Field(None, description="Directory for mesh and field dumps.")

    @field_validator("f", mode="before")
    @classmethod
    def _coefficients_present(cls, value):
        if isinstance(value, (int, float)):
            value = [value]
        if isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()]
        if not value:
            raise ValueError("source needs at least one coefficient")
        return value

    @field_validator("m", "m_grid", mode="before")
    @classmethod
    def _m_syntax(cls, value):
        if value is None:
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = repr(value)
        if not isinstance(value, str):
            raise ValueError(f"m expression must be text or a number, got {value!r}")
        try:
            values = parse_m_expression(value)
        except UsageError as e:
            raise ValueError(str(e)) from e
        if any(v <= 0 for v in values if v == v):
            raise ValueError(f"m values must be positive, got '{value}'")
        return value.strip()

    @model_validator(mode="after")
    def _resolution_and_deformation(self) -> "RunConfig":
        if self.n_theta % (4 * self.s):
            raise ValueError(f"n_theta={self.n_theta} must be a multiple of 4*s={4 * self.s}")
        if abs(self.t * self.a) > 0.2:
            raise ValueError(f"|t*a| = {abs(self.t * self.a):.3g} exceeds 0.2")
        return self

    def ball(self) -> BallConfig:
        return BallConfig(self.n, self.R)

    def source(self) -> RadialSource:
        return RadialSource(tuple(self.f))

    def m_values(self, m0: Callable[[], float], grid: bool = False) -> list[float]:
        """Resolved m values from ``m_grid`` (when ``grid``) or ``m``; empty when unset."""
        text = self.m_grid if grid and self.m_grid else self.m
        if text is None:
            return []
        return parse_m_expression(text, m0)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise UsageError("Config file must contain a mapping")
        return cls(**data)
