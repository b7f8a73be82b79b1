"""Base adversarial chain functions.

Four families live here: the boundary-weighted chain quadratic ``Q``, its
strongly convex and convex variants, and the nonconvex chain with the
separable ``Gamma`` penalty.  Every evaluator accepts arrays whose last axis
is the function's dimension, so stacks of blocks evaluate in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

C_GAMMA = 360.0
GAMMA_SCALE = 120.0


def _check_dim(x, m):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != m:
        raise ValueError(f"expected last dimension {m}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class ChainQuadParams:
    xi: float
    m: int
    zeta: float

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi}")
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError(f"zeta must lie in [0, 1], got {self.zeta}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")


@dataclass(frozen=True)
class NesterovScParams:
    alpha: float
    m: int

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")

    @property
    def q(self) -> float:
        s = math.sqrt(self.alpha)
        return (1.0 - s) / (1.0 + s)

    @property
    def dim(self) -> int:
        return self.m

    def quad(self) -> ChainQuadParams:
        s = math.sqrt(self.alpha)
        return ChainQuadParams(1.0, self.m, 2.0 * s / (s + 1.0))


@dataclass(frozen=True)
class NesterovCParams:
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")

    @property
    def dim(self) -> int:
        return 2 * self.m - 1

    def quad(self) -> ChainQuadParams:
        return ChainQuadParams(1.0, self.dim, 1.0)


@dataclass(frozen=True)
class CarmonParams:
    alpha: float
    m: int
    c_gamma: float = C_GAMMA

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if self.c_gamma != C_GAMMA:
            raise ValueError("c_gamma is fixed at 360")

    @property
    def dim(self) -> int:
        return self.m + 1

    def quad(self) -> ChainQuadParams:
        return ChainQuadParams(math.sqrt(self.alpha), self.m + 1, 0.0)


# ---------------------------------------------------------------- Q


def q_eval(x, p: ChainQuadParams):
    """Value and gradient of the chain quadratic ``Q(x; xi, m, zeta)``."""
    x = _check_dim(x, p.m)
    d = np.diff(x, axis=-1)
    value = (
        0.5 * p.xi * (x[..., 0] - 1.0) ** 2
        + 0.5 * np.sum(d * d, axis=-1)
        + 0.5 * p.zeta * x[..., -1] ** 2
    )
    grad = np.zeros_like(x)
    grad[..., :-1] -= d
    grad[..., 1:] += d
    grad[..., 0] += p.xi * (x[..., 0] - 1.0)
    grad[..., -1] += p.zeta * x[..., -1]
    return value, grad


def q_hessian(p: ChainQuadParams) -> np.ndarray:
    m = p.m
    h = np.zeros((m, m))
    idx = np.arange(m - 1)
    h[idx, idx] += 1.0
    h[idx + 1, idx + 1] += 1.0
    h[idx, idx + 1] = -1.0
    h[idx + 1, idx] = -1.0
    h[0, 0] += p.xi
    h[-1, -1] += p.zeta
    return h


def _q_banded(p: ChainQuadParams, scale=1.0, shift=0.0):
    # (1, 1) band storage of scale * hess(Q) + shift * I
    m = p.m
    ab = np.zeros((3, m))
    diag = np.full(m, 2.0)
    diag[0] = diag[-1] = 1.0
    if m == 1:
        diag[0] = 0.0
    diag[0] += p.xi
    diag[-1] += p.zeta
    ab[1] = scale * diag + shift
    ab[0, 1:] = -scale
    ab[2, :-1] = -scale
    return ab


# ---------------------------------------------------------------- f_Nsc


def nsc_eval(x, p: NesterovScParams):
    qv, qg = q_eval(x, p.quad())
    x = np.asarray(x, dtype=float)
    c = (1.0 - p.alpha) / 4.0
    value = c * qv + 0.5 * p.alpha * np.sum(x * x, axis=-1)
    return value, c * qg + p.alpha * x


def nsc_hessian(p: NesterovScParams) -> np.ndarray:
    return (1.0 - p.alpha) / 4.0 * q_hessian(p.quad()) + p.alpha * np.eye(p.m)


def nsc_minimizer(p: NesterovScParams) -> np.ndarray:
    """Exact minimizer from the tridiagonal stationarity system."""
    c = (1.0 - p.alpha) / 4.0
    rhs = np.zeros(p.m)
    rhs[0] = c
    return solve_banded((1, 1), _q_banded(p.quad(), c, p.alpha), rhs)


@dataclass(frozen=True)
class NscConstants:
    gap_at_zero: float
    gap_at_zero_bound: float
    gap_lower: float
    class_interval: tuple


def nsc_constants(p: NesterovScParams) -> NscConstants:
    """Closed-form constants of ``f_Nsc``.

    ``gap_at_zero`` is the exact optimality gap at the origin (linear solve);
    ``gap_at_zero_bound`` is ``q^2 / (1 - q^2)``, the bound the embedding
    proof relies on; ``gap_lower`` bounds the gap on the slice ``x_m = 0``.
    """
    q = p.q
    xstar = nsc_minimizer(p)
    gap = float(nsc_eval(np.zeros(p.m), p)[0] - nsc_eval(xstar, p)[0])
    bound = q * q / (1.0 - q * q) if q > 0 else 0.0
    return NscConstants(
        gap_at_zero=gap,
        gap_at_zero_bound=bound,
        gap_lower=0.5 * p.alpha * q ** (2 * p.m + 2),
        class_interval=(p.alpha, 1.0),
    )


# ---------------------------------------------------------------- f_Nc


def nc_eval(x, p: NesterovCParams):
    qv, qg = q_eval(x, p.quad())
    return 0.25 * qv, 0.25 * qg


def nc_hessian(p: NesterovCParams) -> np.ndarray:
    return 0.25 * q_hessian(p.quad())


def nc_minimizer(p: NesterovCParams) -> np.ndarray:
    rhs = np.zeros(p.dim)
    rhs[0] = 1.0
    return solve_banded((1, 1), _q_banded(p.quad()), rhs)


@dataclass(frozen=True)
class NcConstants:
    gap_at_zero: float
    dist2_to_minimizer: float
    dist2_bound: float
    gap_floor: float
    class_interval: tuple


def nc_constants(p: NesterovCParams) -> NcConstants:
    xstar = nc_minimizer(p)
    gap = float(nc_eval(np.zeros(p.dim), p)[0] - nc_eval(xstar, p)[0])
    return NcConstants(
        gap_at_zero=gap,
        dist2_to_minimizer=float(xstar @ xstar),
        dist2_bound=2.0 * p.m / 3.0,
        gap_floor=1.0 / (16.0 * p.m),
        class_interval=(0.0, 1.0),
    )


# ---------------------------------------------------------------- Gamma and f_C


def _gamma_antiderivative(t):
    # integral of t^2 (t - 1) / (1 + t^2)
    return 0.5 * t * t - t - 0.5 * np.log1p(t * t) + np.arctan(t)


_G1 = float(_gamma_antiderivative(1.0))


def gamma_scalar(t):
    """``120 * int_1^t s^2 (s - 1) / (1 + s^2) ds`` elementwise."""
    t = np.asarray(t, dtype=float)
    return GAMMA_SCALE * (_gamma_antiderivative(t) - _G1)


def gamma_prime(t):
    t = np.asarray(t, dtype=float)
    return GAMMA_SCALE * t * t * (t - 1.0) / (1.0 + t * t)


def gamma_second(t):
    t = np.asarray(t, dtype=float)
    t2 = t * t
    return GAMMA_SCALE * (t2 * t2 + 3.0 * t2 - 2.0 * t) / (1.0 + t2) ** 2


def gamma_curvature_extrema() -> np.ndarray:
    """Real critical points of ``gamma_second``.

    The numerator of its derivative is ``-2 t^3 + 6 t^2 + 6 t - 2``.
    """
    roots = np.roots([-2.0, 6.0, 6.0, -2.0])
    return np.sort(roots[np.abs(roots.imag) < 1e-12].real)


def gamma_eval(x, p: CarmonParams):
    """Separable penalty over the first ``m`` coordinates of an (m+1)-vector."""
    x = _check_dim(x, p.dim)
    y = x[..., : p.m]
    value = np.sum(gamma_scalar(y), axis=-1)
    grad = np.zeros_like(x)
    grad[..., : p.m] = gamma_prime(y)
    return value, grad


def fc_eval(x, p: CarmonParams):
    qv, qg = q_eval(x, p.quad())
    gv, gg = gamma_eval(x, p)
    return qv + p.alpha * gv, qg + p.alpha * gg


def fc_hessian(x, p: CarmonParams) -> np.ndarray:
    x = _check_dim(x, p.dim)
    h = q_hessian(p.quad())
    idx = np.arange(p.m)
    h[idx, idx] += p.alpha * gamma_second(x[: p.m])
    return h


@dataclass(frozen=True)
class FcConstants:
    gap_at_zero: float
    gap_at_zero_bound: float
    grad_floor: float
    class_interval: tuple
    gamma_interval: tuple


def fc_constants(p: CarmonParams) -> FcConstants:
    # f_C >= 0 everywhere and f_C(1, ..., 1) = 0, so the gap at 0 is f_C(0).
    a = p.alpha
    return FcConstants(
        gap_at_zero=float(fc_eval(np.zeros(p.dim), p)[0]),
        gap_at_zero_bound=0.5 * math.sqrt(a) + 10.0 * a * p.m,
        grad_floor=a**0.75 / 4.0,
        class_interval=(-a * p.c_gamma, 4.0 + a * p.c_gamma),
        gamma_interval=(-p.c_gamma, p.c_gamma),
    )


# ---------------------------------------------------------------- generic spec

FAMILIES = ("quad", "nsc", "nc", "carmon")


@dataclass(frozen=True)
class ChainFunctionSpec:
    """One base hard function: a family tag plus its parameter record."""

    family: str
    params: object

    def __post_init__(self):
        expected = {
            "quad": ChainQuadParams,
            "nsc": NesterovScParams,
            "nc": NesterovCParams,
            "carmon": CarmonParams,
        }
        if self.family not in expected:
            raise ValueError(f"unknown family {self.family!r}")
        if not isinstance(self.params, expected[self.family]):
            raise TypeError(f"{self.family} needs {expected[self.family].__name__}")

    @property
    def dim(self) -> int:
        p = self.params
        return p.m if self.family == "quad" else p.dim

    def eval(self, x):
        fn = {"quad": q_eval, "nsc": nsc_eval, "nc": nc_eval, "carmon": fc_eval}
        return fn[self.family](x, self.params)

    def hessian(self, x=None) -> np.ndarray:
        p = self.params
        if self.family == "quad":
            return q_hessian(p)
        if self.family == "nsc":
            return nsc_hessian(p)
        if self.family == "nc":
            return nc_hessian(p)
        return fc_hessian(np.zeros(p.dim) if x is None else x, p)

    @property
    def curvature_interval(self) -> tuple:
        """Certified (lower, upper) Hessian bounds of the base function."""
        p = self.params
        if self.family == "quad":
            return (0.0, 4.0)
        if self.family == "nsc":
            return (p.alpha, 1.0)
        if self.family == "nc":
            return (0.0, 1.0)
        return (-p.alpha * p.c_gamma, 4.0 + p.alpha * p.c_gamma)

    @property
    def is_quadratic(self) -> bool:
        return self.family != "carmon"

    def minimizer(self) -> np.ndarray:
        p = self.params
        if self.family == "nsc":
            return nsc_minimizer(p)
        if self.family == "nc":
            return nc_minimizer(p)
        if self.family == "carmon":
            return np.ones(p.dim)
        h = q_hessian(p)
        rhs = np.zeros(p.m)
        rhs[0] = p.xi
        return np.linalg.lstsq(h, rhs, rcond=None)[0]

    def to_dict(self) -> dict:
        return {"family": self.family, **{k: v for k, v in vars(self.params).items()}}
