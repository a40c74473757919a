"""CO2 accounting from speed and acceleration.

The rate model is a cubic in speed plus a traction term, clamped at zero.
Absolute values are in arbitrary "model mass units"; only ratios between
scenarios are meant to be compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class EmissionCoeffs:
    c0: float = 1.0
    c1: float = 0.05
    c2: float = 0.01
    c3: float = 0.0005
    c4: float = 0.2
    unit: str = "model mass units"

    def __post_init__(self) -> None:
        if not self.c0 > 0:
            raise ValueError("c0 (idle rate) must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "EmissionCoeffs":
        known = {k: d[k] for k in ("c0", "c1", "c2", "c3", "c4", "unit") if k in d}
        return cls(**known)


def co2_rate(v: float, a: float, coeffs: EmissionCoeffs) -> float:
    if v < 0:
        raise ValueError("speed must be >= 0")
    rate = (
        coeffs.c0
        + coeffs.c1 * v
        + coeffs.c2 * v * v
        + coeffs.c3 * v * v * v
        + coeffs.c4 * max(0.0, a) * v
    )
    return max(0.0, rate)


def integrate_emissions(
    trajectory: Iterable[tuple[float, float]], coeffs: EmissionCoeffs, dt: float
) -> float:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return sum(co2_rate(v, a, coeffs) * dt for v, a in trajectory)
