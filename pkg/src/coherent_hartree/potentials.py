"""External potentials, interaction kernels and their Taylor remainders.

Every object evaluates on point arrays of shape ``(..., d)`` and returns
values ``(...)``, gradients ``(..., d)``, Hessians ``(..., d, d)`` and third
derivative tensors ``(..., d, d, d)`` from closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np


class PotentialError(ValueError):
    """Raised for malformed potential or kernel parameters."""


def _points(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def _radial(r: np.ndarray, profile: Callable[[np.ndarray, int], list[np.ndarray]], order: int):
    """Derivative of ``g(|r|^2)`` of the given order, from s-derivatives of ``g``."""
    s = np.sum(r * r, axis=-1)
    g = profile(s, order)
    if order == 0:
        return g[0]
    dim = r.shape[-1]
    eye = np.eye(dim)
    if order == 1:
        return 2 * r * g[1][..., None]
    if order == 2:
        return (2 * g[1][..., None, None] * eye
                + 4 * g[2][..., None, None] * r[..., :, None] * r[..., None, :])
    sym = (eye[:, :, None] * r[..., None, None, :]
           + eye[:, None, :] * r[..., None, :, None]
           + eye[None, :, :] * r[..., :, None, None])
    return (4 * g[2][..., None, None, None] * sym
            + 8 * g[3][..., None, None, None]
            * r[..., :, None, None] * r[..., None, :, None] * r[..., None, None, :])


class _Smooth:
    """Shared derivative dispatch for potentials and kernels."""

    def derivative(self, t: float, x, order: int) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# external potentials V(t, x)


class Potential(_Smooth):
    time_dependent = False

    def value(self, t: float, x) -> np.ndarray:
        return self.derivative(t, x, 0)

    def grad(self, t: float, x) -> np.ndarray:
        return self.derivative(t, x, 1)

    def hess(self, t: float, x) -> np.ndarray:
        return self.derivative(t, x, 2)

    def third(self, t: float, x) -> np.ndarray:
        return self.derivative(t, x, 3)

    def __add__(self, other: "Potential") -> "SumPotential":
        return SumPotential((self, other))


def _zeros_for(x: np.ndarray, order: int) -> np.ndarray:
    dim = x.shape[-1]
    return np.zeros(x.shape[:-1] + (dim,) * order)


@dataclass(frozen=True)
class ZeroPotential(Potential):
    def derivative(self, t, x, order):
        return _zeros_for(_points(x), order)

    def describe(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class QuadraticPotential(Potential):
    """V(x) = 1/2 <x, A x> + b . x"""

    matrix: np.ndarray
    linear: np.ndarray | None = None

    def __post_init__(self):
        mat = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if mat.shape[0] != mat.shape[1] or not np.allclose(mat, mat.T):
            raise PotentialError("quadratic potential needs a symmetric square matrix")
        lin = np.zeros(mat.shape[0]) if self.linear is None else np.atleast_1d(np.asarray(self.linear, float))
        if lin.shape != (mat.shape[0],):
            raise PotentialError("linear coefficient has the wrong dimension")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "linear", lin)

    @classmethod
    def harmonic(cls, omega: float = 1.0, dim: int = 1) -> "QuadraticPotential":
        return cls(omega ** 2 * np.eye(dim))

    def derivative(self, t, x, order):
        x = _points(x)
        if order == 0:
            return 0.5 * np.einsum("...i,ij,...j->...", x, self.matrix, x) + x @ self.linear
        if order == 1:
            return x @ self.matrix.T + self.linear
        if order == 2:
            return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()
        return _zeros_for(x, 3)

    def describe(self):
        return {"kind": "quadratic", "A": self.matrix.tolist(), "b": self.linear.tolist()}


@dataclass(frozen=True)
class ModulatedHarmonic(Potential):
    """V(t, x) = 1/2 omega(t)^2 |x|^2 with omega(t) = omega0 (1 + delta sin(nu t))."""

    omega0: float = 1.0
    delta: float = 0.0
    nu: float = 1.0
    time_dependent = True

    def omega(self, t: float) -> float:
        return self.omega0 * (1 + self.delta * np.sin(self.nu * t))

    def derivative(self, t, x, order):
        x = _points(x)
        w2 = self.omega(t) ** 2
        if order == 0:
            return 0.5 * w2 * np.sum(x * x, axis=-1)
        if order == 1:
            return w2 * x
        if order == 2:
            return w2 * np.broadcast_to(np.eye(x.shape[-1]), x.shape[:-1] + (x.shape[-1],) * 2).copy()
        return _zeros_for(x, 3)

    def describe(self):
        return {"kind": "modulated", "omega0": self.omega0, "delta": self.delta, "nu": self.nu}


def _gaussian_profile(amplitude: float, width: float):
    inv = 1.0 / width ** 2

    def profile(s, order):
        g0 = amplitude * np.exp(-s * inv)
        return [g0 * (-inv) ** k for k in range(order + 1)]

    return profile


@dataclass(frozen=True)
class GaussianBump(Potential):
    """V(x) = c exp(-|x - x_c|^2 / sigma^2)"""

    amplitude: float = 1.0
    width: float = 1.0
    center: float | Sequence[float] = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise PotentialError("bump width must be positive")

    def derivative(self, t, x, order):
        x = _points(x)
        return _radial(x - np.asarray(self.center, float), _gaussian_profile(self.amplitude, self.width), order)

    def describe(self):
        return {"kind": "bump", "c": self.amplitude, "sigma": self.width,
                "center": np.atleast_1d(self.center).tolist()}


@dataclass(frozen=True)
class SumPotential(Potential):
    terms: tuple[Potential, ...] = field(default_factory=tuple)

    @property
    def time_dependent(self) -> bool:  # type: ignore[override]
        return any(term.time_dependent for term in self.terms)

    def derivative(self, t, x, order):
        x = _points(x)
        total = _zeros_for(x, order)
        for term in self.terms:
            total = total + term.derivative(t, x, order)
        return total

    def describe(self):
        return {"kind": "sum", "terms": [term.describe() for term in self.terms]}


# ---------------------------------------------------------------------------
# interaction kernels K(x)


class Kernel(_Smooth):
    even = True
    bounded = True

    def derivative(self, t, x, order):
        return self.kernel_derivative(x, order)

    def kernel_derivative(self, x, order: int) -> np.ndarray:
        raise NotImplementedError

    def value(self, x) -> np.ndarray:
        return self.kernel_derivative(x, 0)

    def grad(self, x) -> np.ndarray:
        return self.kernel_derivative(x, 1)

    def hess(self, x) -> np.ndarray:
        return self.kernel_derivative(x, 2)

    def third(self, x) -> np.ndarray:
        return self.kernel_derivative(x, 3)

    def __call__(self, x) -> np.ndarray:
        return self.value(x)

    @property
    def is_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class ZeroKernel(Kernel):
    def kernel_derivative(self, x, order):
        return _zeros_for(_points(x), order)

    @property
    def is_zero(self) -> bool:
        return True

    def describe(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class ConstantKernel(Kernel):
    kappa: float = 1.0

    def kernel_derivative(self, x, order):
        x = _points(x)
        if order == 0:
            return np.full(x.shape[:-1], float(self.kappa))
        return _zeros_for(x, order)

    def describe(self):
        return {"kind": "constant", "kappa": self.kappa}


@dataclass(frozen=True)
class GaussianKernel(Kernel):
    """K(x) = lambda exp(-|x|^2 / sigma^2)"""

    strength: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise PotentialError("kernel width must be positive")

    def kernel_derivative(self, x, order):
        return _radial(_points(x), _gaussian_profile(self.strength, self.width), order)

    def describe(self):
        return {"kind": "gaussian", "lambda": self.strength, "sigma": self.width}


@dataclass(frozen=True)
class ShiftedGaussianKernel(Kernel):
    """K(x) = lambda exp(-|x - x0|^2 / sigma^2); not even unless x0 = 0."""

    strength: float = 1.0
    width: float = 1.0
    offset: float | Sequence[float] = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise PotentialError("kernel width must be positive")

    @property
    def even(self) -> bool:  # type: ignore[override]
        return bool(np.all(np.asarray(self.offset) == 0))

    def kernel_derivative(self, x, order):
        x = _points(x)
        return _radial(x - np.asarray(self.offset, float), _gaussian_profile(self.strength, self.width), order)

    def describe(self):
        return {"kind": "shifted_gaussian", "lambda": self.strength, "sigma": self.width,
                "x0": np.atleast_1d(self.offset).tolist()}


@dataclass(frozen=True)
class BECKernel(Kernel):
    """K(x) = (a1 + a2 |x|^2 + a3 |x|^4) exp(-A^2 |x|^2) + a4 exp(-B^2 |x|^2)"""

    a1: float = 1.0
    a2: float = 0.0
    a3: float = 0.0
    a4: float = 0.0
    A: float = 1.0
    B: float = 1.0

    def __post_init__(self):
        if self.A == 0 or (self.a4 != 0 and self.B == 0):
            raise PotentialError("BEC kernel decay rates must be nonzero")

    def _profile(self, s, order):
        a = self.A ** 2
        b = self.B ** 2
        poly = [self.a1 + self.a2 * s + self.a3 * s * s, self.a2 + 2 * self.a3 * s,
                2 * self.a3 * np.ones_like(s), np.zeros_like(s)]
        ea = np.exp(-a * s)
        eb = self.a4 * np.exp(-b * s)
        out = []
        for k in range(order + 1):
            # Leibniz rule for d^k/ds^k [P(s) exp(-a s)]
            acc = np.zeros_like(s)
            for m in range(k + 1):
                acc = acc + comb(k, m) * poly[m] * (-a) ** (k - m)
            out.append(acc * ea + eb * (-b) ** k)
        return out

    def kernel_derivative(self, x, order):
        return _radial(_points(x), self._profile, order)

    def describe(self):
        return {"kind": "bec", "a1": self.a1, "a2": self.a2, "a3": self.a3, "a4": self.a4,
                "A": self.A, "B": self.B}


@dataclass(frozen=True)
class CosineBumpKernel(Kernel):
    """K(x) = lambda ((1 + cos(pi |x|^2 / R^2)) / 2)^2 inside |x| < R, zero outside.

    The profile vanishes to fourth order in |x|^2 - R^2 at the edge, so the
    kernel has bounded derivatives through order three.
    """

    strength: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise PotentialError("cosine bump radius must be positive")

    def _profile(self, s, order):
        beta = np.pi / self.radius ** 2
        inside = s < self.radius ** 2
        c = np.cos(beta * s)
        sn = np.sin(beta * s)
        lam = self.strength
        derivs = [0.25 * (1 + c) ** 2,
                  -0.5 * beta * sn * (1 + c),
                  -0.5 * beta ** 2 * (c + np.cos(2 * beta * s)),
                  0.5 * beta ** 3 * (sn + 2 * np.sin(2 * beta * s))]
        return [np.where(inside, lam * d, 0.0) for d in derivs[:order + 1]]

    def kernel_derivative(self, x, order):
        return _radial(_points(x), self._profile, order)

    def describe(self):
        return {"kind": "cosine_bump", "lambda": self.strength, "R": self.radius}


@dataclass(frozen=True)
class QuadraticKernel(Kernel):
    """K(x) = k0 + g . x + 1/2 <x, H x>.  Unbounded; for envelope-level checks only."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(1))
    linear: np.ndarray | None = None
    constant: float = 0.0
    bounded = False

    def __post_init__(self):
        mat = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        lin = np.zeros(mat.shape[0]) if self.linear is None else np.atleast_1d(np.asarray(self.linear, float))
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "linear", lin)

    @property
    def even(self) -> bool:  # type: ignore[override]
        return bool(np.all(self.linear == 0))

    def kernel_derivative(self, x, order):
        x = _points(x)
        if order == 0:
            return self.constant + x @ self.linear + 0.5 * np.einsum("...i,ij,...j->...", x, self.matrix, x)
        if order == 1:
            return x @ self.matrix.T + self.linear
        if order == 2:
            return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()
        return _zeros_for(x, 3)

    def describe(self):
        return {"kind": "quadratic", "H": self.matrix.tolist(), "g": self.linear.tolist(),
                "k0": self.constant}


# ---------------------------------------------------------------------------
# module-level evaluation API


def eval_V(potential: Potential, t: float, x) -> np.ndarray:
    return potential.value(t, x)


def grad_V(potential: Potential, t: float, x) -> np.ndarray:
    return potential.grad(t, x)


def hess_V(potential: Potential, t: float, x) -> np.ndarray:
    return potential.hess(t, x)


def third_V(potential: Potential, t: float, x) -> np.ndarray:
    return potential.third(t, x)


def eval_K(kernel: Kernel, x) -> np.ndarray:
    return kernel.value(x)


def grad_K(kernel: Kernel, x) -> np.ndarray:
    return kernel.grad(x)


def hess_K(kernel: Kernel, x) -> np.ndarray:
    return kernel.hess(x)


def third_K(kernel: Kernel, x) -> np.ndarray:
    return kernel.third(x)


def _check_eps(eps: float) -> None:
    if not np.isfinite(eps) or eps < 0:
        raise PotentialError(f"eps must be finite and non-negative, got {eps}")


def _remainder(value_at: Callable, base_value, base_grad, base_hess, y, eps):
    y = _points(y)
    if eps == 0:
        return 0.5 * np.einsum("...i,ij,...j->...", y, base_hess, y)
    root = np.sqrt(eps)
    return (value_at(root * y) - base_value - root * (y @ base_grad)) / eps


def taylor_remainder_V(potential: Potential, t: float, q, y, eps: float) -> np.ndarray:
    """(V(t, q + sqrt(eps) y) - V(t, q) - sqrt(eps) y . grad V(t, q)) / eps; the eps -> 0 limit at eps = 0."""
    _check_eps(eps)
    q = np.atleast_1d(np.asarray(q, float))
    return _remainder(lambda dy: potential.value(t, q + dy), potential.value(t, q),
                      potential.grad(t, q), potential.hess(t, q), y, eps)


def taylor_remainder_K(kernel: Kernel, shift, y, eps: float) -> np.ndarray:
    """Same remainder for the kernel expanded around ``shift``."""
    _check_eps(eps)
    shift = np.atleast_1d(np.asarray(shift, float))
    return _remainder(lambda dy: kernel.value(shift + dy), kernel.value(shift),
                      kernel.grad(shift), kernel.hess(shift), y, eps)


def cubic_form(tensor: np.ndarray, y) -> np.ndarray:
    """(1/6) T[y, y, y] for a symmetric third-order tensor T."""
    y = _points(y)
    return np.einsum("ijk,...i,...j,...k->...", tensor, y, y, y) / 6.0


def third_taylor_terms(potential: Potential, kernel: Kernel, t: float, q, shift, y):
    """Cubic Taylor terms of V at q, of K at 0 and of K at ``shift``, evaluated on ``y``."""
    q = np.atleast_1d(np.asarray(q, float))
    shift = np.atleast_1d(np.asarray(shift, float))
    zero = np.zeros_like(shift)
    return (cubic_form(potential.third(t, q), y),
            cubic_form(kernel.third(zero), y),
            cubic_form(kernel.third(shift), y))


# ---------------------------------------------------------------------------
# catalog used by configuration files and the CLI

POTENTIAL_CATALOG: dict[str, tuple[type, dict[str, str]]] = {
    "zero": (ZeroPotential, {}),
    "quadratic": (QuadraticPotential, {"A": "matrix", "b": "linear"}),
    "harmonic": (QuadraticPotential, {"omega": "omega"}),
    "modulated": (ModulatedHarmonic, {"omega0": "omega0", "delta": "delta", "nu": "nu"}),
    "bump": (GaussianBump, {"c": "amplitude", "sigma": "width", "center": "center"}),
    "sum": (SumPotential, {"terms": "terms"}),
}

KERNEL_CATALOG: dict[str, tuple[type, dict[str, str]]] = {
    "zero": (ZeroKernel, {}),
    "constant": (ConstantKernel, {"kappa": "kappa"}),
    "gaussian": (GaussianKernel, {"lambda": "strength", "sigma": "width"}),
    "shifted_gaussian": (ShiftedGaussianKernel, {"lambda": "strength", "sigma": "width", "x0": "offset"}),
    "bec": (BECKernel, {"a1": "a1", "a2": "a2", "a3": "a3", "a4": "a4", "A": "A", "B": "B"}),
    "cosine_bump": (CosineBumpKernel, {"lambda": "strength", "R": "radius"}),
    "quadratic": (QuadraticKernel, {"H": "matrix", "g": "linear", "k0": "constant"}),
}


def build_potential(spec: dict, dim: int = 1) -> Potential:
    """Construct a potential from a ``{"kind": ..., params}`` mapping."""
    params = dict(spec)
    kind = params.pop("kind", None)
    if kind not in POTENTIAL_CATALOG:
        raise PotentialError(f"unknown potential kind {kind!r}; known: {sorted(POTENTIAL_CATALOG)}")
    cls, names = POTENTIAL_CATALOG[kind]
    unknown = set(params) - set(names)
    if unknown:
        raise PotentialError(f"potential {kind!r}: unknown key(s) {sorted(unknown)}")
    if kind == "harmonic":
        return QuadraticPotential.harmonic(float(params.get("omega", 1.0)), dim)
    if kind == "sum":
        return SumPotential(tuple(build_potential(term, dim) for term in params.get("terms", [])))
    return cls(**{names[key]: value for key, value in params.items()})


def build_kernel(spec: dict) -> Kernel:
    params = dict(spec)
    kind = params.pop("kind", None)
    if kind not in KERNEL_CATALOG:
        raise PotentialError(f"unknown kernel kind {kind!r}; known: {sorted(KERNEL_CATALOG)}")
    cls, names = KERNEL_CATALOG[kind]
    unknown = set(params) - set(names)
    if unknown:
        raise PotentialError(f"kernel {kind!r}: unknown key(s) {sorted(unknown)}")
    return cls(**{names[key]: value for key, value in params.items()})
