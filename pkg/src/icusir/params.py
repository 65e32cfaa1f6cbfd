"""
Model parameters and state points.
"""

import math
from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DomainError


class EpidemicParams(BaseModel):
    """Rates and caps of the controlled SIR model."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    beta: float = Field(gt=0, description="contact rate (1/time)")
    gamma: float = Field(gt=0, description="recovery rate (1/time)")
    abar: float = Field(gt=0, lt=1, description="maximal confinement fraction")
    istar: float = Field(gt=0, lt=1, description="ICU proportion cap")
    q: float = Field(default=0.0, ge=0, description="discount rate (1/time)")

    @model_validator(mode="after")
    def _consistency(self) -> "EpidemicParams":
        if not self.gamma < self.beta * (1.0 - self.abar):
            raise ValueError(
                f"gamma={self.gamma} must be below beta*(1-abar)={self.beta * (1 - self.abar)}"
            )
        return self

    @property
    def green_threshold(self) -> float:
        """gamma/beta: abscissa of the uncontrolled infection peak."""
        return self.gamma / self.beta

    @property
    def yellow_threshold(self) -> float:
        """gamma/(beta(1-abar)): abscissa of the peak under full confinement."""
        return self.gamma / (self.beta * (1.0 - self.abar))

    @property
    def theta_star(self) -> float:
        """Level of H_abar on the yellow boundary psi."""
        k = self.yellow_threshold
        return self.istar + k - k * math.log(k)

    @property
    def transit_rate(self) -> float:
        """beta(1-abar)/(gamma abar), exponent factor of the closed-form s2."""
        return self.beta * (1.0 - self.abar) / (self.gamma * self.abar)

    def peak_threshold(self, a: float) -> float:
        """gamma/(beta(1-a)) for a constant control a."""
        return self.gamma / (self.beta * (1.0 - a))

    def check_control(self, a: float) -> float:
        if not 0.0 <= a <= self.abar:
            raise DomainError(f"control {a} outside [0, {self.abar}]")
        return a

    def with_discount(self, q: float) -> "EpidemicParams":
        return self.model_copy(update={"q": q})


# Reference setting: two-week recovery, 60% confinement cap, France-sized population
EXAMPLE1 = EpidemicParams(beta=1 / 3, gamma=1 / 14, abar=0.6, istar=0.056)
EXAMPLE1_POPULATION = 67_000_000


@dataclass(frozen=True)
class State:
    """A point (s, i) of the SIR triangle; r = 1 - s - i is never stored."""

    s: float
    i: float

    @property
    def r(self) -> float:
        return 1.0 - self.s - self.i

    def in_simplex(self, tol: float = 0.0) -> bool:
        return self.s >= -tol and self.i >= -tol and self.s + self.i <= 1.0 + tol

    def as_tuple(self) -> tuple[float, float]:
        return (self.s, self.i)

    @classmethod
    def parse(cls, text: str) -> "State":
        """Parse "s,i" as written on the command line."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2:
            raise DomainError(f"expected 's,i', got {text!r}")
        return cls(float(parts[0]), float(parts[1]))
