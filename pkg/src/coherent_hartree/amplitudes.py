"""Initial envelope profiles a_j(y)."""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma
from typing import Sequence

import numpy as np


class AmplitudeError(ValueError):
    pass


class Profile:
    """Callable envelope profile on ``(..., d)`` point arrays."""

    def __call__(self, y) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _vec(value, dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1 and dim > 1:
        arr = np.full(dim, float(arr[0]))
    return arr


@dataclass(frozen=True)
class GaussianProfile(Profile):
    """scale * pi^{-d/4} w^{-d/2} exp(-|y - c|^2 / (2 w^2) + i k . y)"""

    width: float = 1.0
    center: float | Sequence[float] = 0.0
    momentum: float | Sequence[float] = 0.0
    scale: complex = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise AmplitudeError("Gaussian width must be positive")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        dim = y.shape[-1]
        rel = y - _vec(self.center, dim)
        norm = np.pi ** (-dim / 4) * self.width ** (-dim / 2)
        phase = y @ _vec(self.momentum, dim)
        return self.scale * norm * np.exp(-np.sum(rel * rel, axis=-1) / (2 * self.width ** 2) + 1j * phase)

    def mass(self, dim: int = 1) -> float:
        return float(abs(self.scale) ** 2)

    def describe(self):
        return {"kind": "gaussian", "width": self.width,
                "center": np.atleast_1d(self.center).tolist(),
                "momentum": np.atleast_1d(self.momentum).tolist(),
                "scale": [float(np.real(self.scale)), float(np.imag(self.scale))]}


@dataclass(frozen=True)
class HeavyTailProfile(Profile):
    """scale * c_m (1 + |y|^2)^{-m/2}, normalised to unit mass before scaling.

    Finite weighted norms need ``m > k + d/2`` for the order ``k`` of interest.
    """

    exponent: float = 3.0
    scale: complex = 1.0
    momentum: float | Sequence[float] = 0.0

    def _norm(self, dim: int) -> float:
        m = self.exponent
        if m <= dim / 2:
            raise AmplitudeError("heavy-tailed profile is not square integrable")
        return float(np.sqrt(np.pi ** (dim / 2) * gamma(m - dim / 2) / gamma(m)))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        dim = y.shape[-1]
        base = (1 + np.sum(y * y, axis=-1)) ** (-self.exponent / 2) / self._norm(dim)
        return self.scale * base * np.exp(1j * (y @ _vec(self.momentum, dim)))

    def mass(self, dim: int = 1) -> float:
        return float(abs(self.scale) ** 2)

    def describe(self):
        return {"kind": "heavy_tail", "exponent": self.exponent,
                "scale": [float(np.real(self.scale)), float(np.imag(self.scale))],
                "momentum": np.atleast_1d(self.momentum).tolist()}


AMPLITUDE_CATALOG = {
    "gaussian": (GaussianProfile, {"width": "width", "center": "center", "momentum": "momentum", "scale": "scale"}),
    "heavy_tail": (HeavyTailProfile, {"exponent": "exponent", "scale": "scale", "momentum": "momentum"}),
}


def build_amplitude(spec: dict) -> Profile:
    params = dict(spec)
    kind = params.pop("kind", "gaussian")
    if kind not in AMPLITUDE_CATALOG:
        raise AmplitudeError(f"unknown amplitude kind {kind!r}; known: {sorted(AMPLITUDE_CATALOG)}")
    cls, names = AMPLITUDE_CATALOG[kind]
    unknown = set(params) - set(names)
    if unknown:
        raise AmplitudeError(f"amplitude {kind!r}: unknown key(s) {sorted(unknown)}")
    if "scale" in params and isinstance(params["scale"], (list, tuple)):
        re, im = params["scale"]
        params["scale"] = complex(re, im)
    return cls(**{names[key]: value for key, value in params.items()})
