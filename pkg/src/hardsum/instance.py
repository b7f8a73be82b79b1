"""Finite-sum adversarial instances.

Components are indexed from 0.  An instance stores the unscaled structure
(block embedding of a base chain function, the shared-penalty variant, or
the inner-product Omega(n) construction) together with the value scale
``lam`` and argument scale ``beta``: ``f_i(x) = lam * fbar_i(x / beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from hardsum import chainfun as cf
from hardsum.chainfun import C_GAMMA, ChainFunctionSpec

SCHEMA = "hardsum.instance/1"
FAMILIES = ("SC", "CVX", "AVG-NC", "IND-NC", "OMEGA-N", "OMEGA-N-CVX", "EMBED")


class HypothesisError(ValueError):
    """Raised when factory inputs fall outside the construction's hypothesis."""


def _positive(**kw):
    for k, v in kw.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise HypothesisError(f"{k} must be a positive finite number, got {v!r}")


# ---------------------------------------------------------------- embeddings


@dataclass(frozen=True)
class EmbeddingFamily:
    """n mutually orthogonal row-orthonormal maps ``U_i`` of shape (a, a*n).

    The default realisation selects coordinate blocks, so component ``i``
    owns coordinates ``i*a .. (i+1)*a - 1``.  ``dense=True`` rotates the
    ambient space by a seeded random orthogonal matrix first.
    """

    block_dim: int
    n: int
    dense: bool = False
    seed: int | None = None
    _rot: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def ambient_dim(self) -> int:
        return self.block_dim * self.n

    def to_blocks(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise ValueError(f"expected dimension {self.ambient_dim}, got {x.shape[-1]}")
        if self._rot is not None:
            x = x @ self._rot.T
        return x.reshape(x.shape[:-1] + (self.n, self.block_dim))

    def from_blocks(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        x = y.reshape(y.shape[:-2] + (self.ambient_dim,))
        if self._rot is not None:
            x = x @ self._rot
        return x

    def matrix(self, i: int) -> np.ndarray:
        a = self.block_dim
        u = np.zeros((a, self.ambient_dim))
        u[:, i * a : (i + 1) * a] = np.eye(a)
        return u if self._rot is None else u @ self._rot

    def to_dict(self) -> dict:
        return {"block_dim": self.block_dim, "n": self.n, "dense": self.dense, "seed": self.seed}


def make_block_family(block_dim: int, n: int, dense: bool = False, seed: int | None = None):
    if int(block_dim) != block_dim or block_dim < 1:
        raise ValueError(f"block_dim must be a positive integer, got {block_dim}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    rot = None
    if dense:
        d = block_dim * n
        if d > 2048:
            raise ValueError("dense embeddings are limited to d <= 2048")
        rng = np.random.default_rng(seed)
        qmat, r = np.linalg.qr(rng.standard_normal((d, d)))
        rot = qmat * np.sign(np.diag(r))
    return EmbeddingFamily(int(block_dim), int(n), dense, seed, rot)


# ---------------------------------------------------------------- instance


@dataclass(frozen=True)
class ScaleParams:
    lam: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for k in ("lam", "beta"):
            v = getattr(self, k)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{k} must be positive, got {v}")


@dataclass(frozen=True)
class Metadata:
    avg_smooth_L: float
    F_interval: tuple
    component_interval: tuple | None
    delta_bound: float
    dist_bound: float | None
    optimum_value: float
    progress_threshold: int
    certificate_kind: str  # GAP | GRADNORM | SUPPORT
    floor_coef: float
    target_epsilon: float | None = None
    lower_bound_ifo: int | None = None
    notes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FiniteSumInstance:
    """An n-component objective ``F = (1/n) sum_i f_i`` plus certified constants."""

    family: str
    n: int
    embedding: EmbeddingFamily
    structure: str  # embed | shared_gamma | omega
    base: ChainFunctionSpec | None
    scale: ScaleParams
    metadata: Metadata
    weight: float = 1.0
    inputs: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.embedding.ambient_dim

    @property
    def block_dim(self) -> int:
        return self.embedding.block_dim

    # ---- evaluation in unscaled coordinates

    def _check_index(self, i):
        if not (0 <= int(i) < self.n) or int(i) != i:
            raise IndexError(f"component index {i} out of range [0, {self.n})")

    def _bar_component(self, i, z):
        n = self.n
        if self.structure == "omega":
            value = -math.sqrt(n) * z[i] + 0.5 * float(z @ z)
            grad = z.copy()
            grad[i] -= math.sqrt(n)
            return value, grad
        y = self.embedding.to_blocks(z)
        gb = np.zeros_like(y)
        if self.structure == "embed":
            v, g = self.base.eval(y[i])
            gb[i] = self.weight * g
            return self.weight * float(v), self.embedding.from_blocks(gb)
        p = self.base.params
        qv, qg = cf.q_eval(y[i], p.quad())
        gv, gg = cf.gamma_eval(y, p)
        gb[:] = (p.alpha / n) * gg
        gb[i] += qg
        return float(qv) + (p.alpha / n) * float(np.sum(gv)), self.embedding.from_blocks(gb)

    def _bar_full(self, z):
        n = self.n
        if self.structure == "omega":
            return -float(np.sum(z)) / math.sqrt(n) + 0.5 * float(z @ z), z - 1.0 / math.sqrt(n)
        y = self.embedding.to_blocks(z)
        v, g = self.base.eval(y)
        w = self.weight if self.structure == "embed" else 1.0
        return w * float(np.sum(v)) / n, (w / n) * self.embedding.from_blocks(g)

    # ---- public oracle-free evaluation

    def component(self, i: int, x):
        """Value and gradient of ``f_i`` at ``x`` (not counted; see OracleSession)."""
        self._check_index(i)
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected point of shape ({self.d},), got {x.shape}")
        lam, beta = self.scale.lam, self.scale.beta
        v, g = self._bar_component(int(i), x / beta)
        return lam * v, (lam / beta) * g

    def full(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected point of shape ({self.d},), got {x.shape}")
        lam, beta = self.scale.lam, self.scale.beta
        v, g = self._bar_full(x / beta)
        return lam * v, (lam / beta) * g

    def component_grads(self, x) -> np.ndarray:
        """All component gradients at ``x`` stacked into an (n, d) array."""
        x = np.asarray(x, dtype=float)
        lam, beta = self.scale.lam, self.scale.beta
        z = x / beta
        n = self.n
        if self.structure == "omega":
            out = np.tile(z, (n, 1))
            out[np.arange(n), np.arange(n)] -= math.sqrt(n)
            return (lam / beta) * out
        y = self.embedding.to_blocks(z)
        out = np.zeros((n,) + y.shape)
        idx = np.arange(n)
        if self.structure == "embed":
            _, g = self.base.eval(y)
            out[idx, idx] = self.weight * g
        else:
            p = self.base.params
            _, qg = cf.q_eval(y, p.quad())
            _, gg = cf.gamma_eval(y, p)
            out[:] = (p.alpha / n) * gg
            out[idx, idx] += qg
        return (lam / beta) * self.embedding.from_blocks(out)

    def component_hessian(self, i: int, x) -> np.ndarray:
        self._check_index(i)
        z = np.asarray(x, dtype=float) / self.scale.beta
        c = self.scale.lam / self.scale.beta**2
        if self.structure == "omega":
            return c * np.eye(self.d)
        a, n = self.block_dim, self.n
        y = self.embedding.to_blocks(z)
        hb = np.zeros((self.d, self.d))
        sl = slice(i * a, (i + 1) * a)
        if self.structure == "embed":
            hb[sl, sl] = self.weight * self.base.hessian(y[i])
        else:
            p = self.base.params
            hb[sl, sl] = cf.q_hessian(p.quad())
            diag = np.zeros((n, a))
            diag[:, : p.m] = (p.alpha / n) * cf.gamma_second(y[:, : p.m])
            hb[np.diag_indices(self.d)] += diag.ravel()
        return c * self._rotate(hb)

    def full_hessian(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float) / self.scale.beta
        c = self.scale.lam / self.scale.beta**2
        if self.structure == "omega":
            return c * np.eye(self.d)
        a, n = self.block_dim, self.n
        y = self.embedding.to_blocks(z)
        w = self.weight if self.structure == "embed" else 1.0
        hb = np.zeros((self.d, self.d))
        for i in range(n):
            sl = slice(i * a, (i + 1) * a)
            hb[sl, sl] = (w / n) * self.base.hessian(y[i])
        return c * self._rotate(hb)

    def _rotate(self, hb):
        rot = self.embedding._rot
        return hb if rot is None else rot.T @ hb @ rot

    # ---- optimum and residuals

    def minimizer(self) -> np.ndarray:
        beta = self.scale.beta
        if self.structure == "omega":
            return np.full(self.d, beta / math.sqrt(self.n))
        y = np.tile(self.base.minimizer(), (self.n, 1))
        return beta * self.embedding.from_blocks(y)

    def gap(self, x) -> float:
        return self.full(x)[0] - self.metadata.optimum_value

    def residual(self, x) -> float:
        """Optimality gap for GAP/SUPPORT families, gradient norm for GRADNORM."""
        if self.metadata.certificate_kind == "GRADNORM":
            return float(np.linalg.norm(self.full(x)[1]))
        return self.gap(x)

    # ---- certificates

    def certified_floor(self, blocks_below: int) -> float:
        """Floor on the residual when ``blocks_below`` blocks have not reached T.

        Returns 0 when the block-count predicate fails.
        """
        md = self.metadata
        c = int(blocks_below)
        if md.certificate_kind == "SUPPORT":
            return md.floor_coef if 2 * c >= self.n else 0.0
        if 2 * c <= self.n:
            return 0.0
        if md.certificate_kind == "GRADNORM":
            return md.floor_coef * math.sqrt(c)
        return md.floor_coef * c

    def to_dict(self) -> dict:
        md = self.metadata
        base = None if self.base is None else self.base.to_dict()
        return {
            "schema": SCHEMA,
            "family": self.family,
            "n": self.n,
            "d": self.d,
            "structure": self.structure,
            "weight": self.weight,
            "base": base,
            "embedding": self.embedding.to_dict(),
            "scale": {"lam": self.scale.lam, "beta": self.scale.beta},
            "inputs": dict(self.inputs),
            "metadata": {
                "avg_smooth_L": md.avg_smooth_L,
                "F_interval": list(md.F_interval),
                "component_interval": None
                if md.component_interval is None
                else list(md.component_interval),
                "delta_bound": md.delta_bound,
                "dist_bound": md.dist_bound,
                "optimum_value": md.optimum_value,
                "progress_threshold": md.progress_threshold,
                "certificate_kind": md.certificate_kind,
                "floor_coef": md.floor_coef,
                "target_epsilon": md.target_epsilon,
                "lower_bound_ifo": md.lower_bound_ifo,
                "notes": md.notes,
            },
        }


# ---------------------------------------------------------------- generic builders


def _base_floor(base: ChainFunctionSpec, n: int):
    """(threshold, kind, coefficient) for a sqrt(n)-weighted embedding."""
    p = base.params
    rn = math.sqrt(n)
    if base.family == "nsc":
        return p.m, "GAP", cf.nsc_constants(p).gap_lower / rn
    if base.family == "nc":
        return p.m, "GAP", cf.nc_constants(p).gap_floor / rn
    if base.family == "carmon":
        return p.m, "GRADNORM", cf.fc_constants(p).grad_floor / rn
    return base.dim, "GAP", 0.0


def _base_gap_and_optimum(base: ChainFunctionSpec):
    p = base.params
    if base.family == "nsc":
        xs = cf.nsc_minimizer(p)
        return float(cf.nsc_eval(np.zeros(p.m), p)[0] - cf.nsc_eval(xs, p)[0]), float(
            cf.nsc_eval(xs, p)[0]
        )
    if base.family == "nc":
        c = cf.nc_constants(p)
        return c.gap_at_zero, float(cf.nc_eval(cf.nc_minimizer(p), p)[0])
    if base.family == "carmon":
        return float(cf.fc_eval(np.zeros(p.dim), p)[0]), 0.0
    xs = base.minimizer()
    v0 = float(cf.q_eval(np.zeros(p.m), p)[0])
    vs = float(cf.q_eval(xs, p)[0])
    return v0 - vs, vs


def embed_sum(base: ChainFunctionSpec, family: EmbeddingFamily) -> FiniteSumInstance:
    """Components ``sqrt(n) * g(U_i x)`` over an orthogonal block family."""
    if base.dim != family.block_dim:
        raise ValueError(f"base dimension {base.dim} != block_dim {family.block_dim}")
    n = family.n
    rn = math.sqrt(n)
    lo, hi = base.curvature_interval
    zeta = max(abs(lo), hi)
    gap, opt = _base_gap_and_optimum(base)
    xs = base.minimizer()
    threshold, kind, coef = _base_floor(base, n)
    md = Metadata(
        avg_smooth_L=zeta,
        F_interval=(lo / rn, zeta),
        component_interval=None,
        delta_bound=rn * gap,
        dist_bound=math.sqrt(n * float(xs @ xs)),
        optimum_value=rn * opt,
        progress_threshold=threshold,
        certificate_kind=kind,
        floor_coef=coef,
    )
    return FiniteSumInstance("EMBED", n, family, "embed", base, ScaleParams(), md, weight=rn)


def rescale(inst: FiniteSumInstance, s: ScaleParams) -> FiniteSumInstance:
    """Return the instance with components ``lam * f_i(x / beta)``."""
    if not isinstance(s, ScaleParams):
        raise TypeError("rescale expects ScaleParams")
    lam, beta = s.lam, s.beta
    c = lam / beta**2
    md = inst.metadata
    ci = None if md.component_interval is None else tuple(c * v for v in md.component_interval)
    coef = md.floor_coef * (lam / beta if md.certificate_kind == "GRADNORM" else lam)
    md = replace(
        md,
        avg_smooth_L=c * md.avg_smooth_L,
        F_interval=tuple(c * v for v in md.F_interval),
        component_interval=ci,
        delta_bound=lam * md.delta_bound,
        dist_bound=None if md.dist_bound is None else beta * md.dist_bound,
        optimum_value=lam * md.optimum_value,
        floor_coef=coef,
    )
    scale = ScaleParams(inst.scale.lam * lam, inst.scale.beta * beta)
    return replace(inst, scale=scale, metadata=md)


def shift_origin(inst: FiniteSumInstance, x0):
    """Wrap ``inst`` so that evaluation at ``x`` uses ``x - x0``; start then sits at x0."""
    x0 = np.asarray(x0, dtype=float)

    def component(i, x):
        return inst.component(i, np.asarray(x, dtype=float) - x0)

    def full(x):
        return inst.full(np.asarray(x, dtype=float) - x0)

    return component, full


def _finalize(inst, family, eps, T, inputs, notes):
    n = inst.n
    md = replace(
        inst.metadata,
        target_epsilon=eps,
        lower_bound_ifo=math.ceil(n * T / 2),
        notes=notes,
    )
    return replace(inst, family=family, metadata=md, inputs=inputs)


# ---------------------------------------------------------------- Omega(n)


def make_omega_n_instance(n: int, L: float, Delta_or_B: float, variant: str = "SC"):
    """Inner-product instance ``lam * (-sqrt(n) <x/beta, e_i> + |x/beta|^2 / 2)``.

    A point whose support has at most n/2 coordinates keeps a gap of at
    least ``lam / 4``; each IFO call reveals at most one new coordinate.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    _positive(L=L, Delta_or_B=Delta_or_B)
    if variant == "SC":
        lam, beta = 2.0 * Delta_or_B, math.sqrt(2.0 * Delta_or_B / L)
        family = "OMEGA-N"
    elif variant == "CVX":
        lam, beta = L * Delta_or_B**2, Delta_or_B
        family = "OMEGA-N-CVX"
    else:
        raise ValueError(f"variant must be SC or CVX, got {variant!r}")
    emb = make_block_family(1, n)
    md = Metadata(
        avg_smooth_L=1.0,
        F_interval=(1.0, 1.0),
        component_interval=(1.0, 1.0),
        delta_bound=0.5,
        dist_bound=1.0,
        optimum_value=-0.5,
        progress_threshold=1,
        certificate_kind="SUPPORT",
        floor_coef=0.25,
    )
    inst = FiniteSumInstance("OMEGA-N", n, emb, "omega", None, ScaleParams(), md)
    inst = rescale(inst, ScaleParams(lam, beta))
    inputs = {"factory": "omega", "n": n, "L": L, "Delta_or_B": Delta_or_B, "variant": variant}
    return _finalize(inst, family, None, 1, inputs, {})


# ---------------------------------------------------------------- parameterized families


def make_sc_instance(n, L, sigma, Delta, epsilon, *, dense=False, seed=None):
    """Strongly convex sum of nonconvex components, average-smooth with L.

    Chain length T is the largest integer for which the gap certificate at
    half the blocks still reaches epsilon; the scale makes F(0) - inf F
    equal to Delta exactly.
    """
    _positive(n=n, L=L, sigma=sigma, Delta=Delta, epsilon=epsilon)
    if sigma > L:
        raise HypothesisError(f"need sigma <= L, got sigma={sigma}, L={L}")
    cap = 8.0 * Delta * n**1.75 * (sigma / L) ** 1.5
    if epsilon > cap:
        raise HypothesisError(f"need epsilon <= 8 Delta n^(7/4) (sigma/L)^(3/2) = {cap:.6g}")
    inputs = {"factory": "sc", "n": n, "L": L, "sigma": sigma, "Delta": Delta, "epsilon": epsilon}
    ratio = math.sqrt(n) * sigma / L
    notes = {"closed_form_T": None, "branch": None}
    if ratio <= 0.25:
        alpha = ratio
        q = (1 - math.sqrt(alpha)) / (1 + math.sqrt(alpha))
        gap = (1 - alpha) * q / 8.0
        lam = Delta / (math.sqrt(n) * gap)

        def half_floor(T):
            return lam * math.sqrt(n) * alpha * q ** (2 * T + 2) / 4.0

        T = math.floor((math.log(lam * math.sqrt(n) * alpha / (4 * epsilon)) / -math.log(q) - 2) / 2)
        while T >= 1 and half_floor(T) < epsilon:
            T -= 1
        while half_floor(T + 1) >= epsilon:
            T += 1
        closed_form_T = math.ceil(
            math.sqrt(L / (math.sqrt(n) * sigma))
            * math.log((sigma / L) ** 1.5 * 8 * n**1.75 * Delta / epsilon)
        )
        notes["closed_form_T"] = closed_form_T
        notes["closed_form_lower_bound"] = n * closed_form_T / 2
        if T >= 1:
            notes["branch"] = "chain"
            base = ChainFunctionSpec("nsc", cf.NesterovScParams(alpha, T))
            inst = embed_sum(base, make_block_family(T, n, dense, seed))
            inst = rescale(inst, ScaleParams(lam, math.sqrt(lam / L)))
            inst = _finalize(inst, "SC", epsilon, T, inputs, notes)
            return inst
        notes["branch"] = "omega: no chain length certifies epsilon"
    else:
        notes["branch"] = "omega: sqrt(n) sigma / L > 1/4"
    if epsilon >= Delta / 4:
        raise HypothesisError("Omega(n) branch needs epsilon < Delta / 4")
    inst = make_omega_n_instance(n, L, Delta, "SC")
    return replace(
        inst,
        inputs=inputs,
        metadata=replace(inst.metadata, target_epsilon=epsilon, notes=notes),
    )


def _nc_dist2(T):
    # squared norm of the minimizer of f_Nc(.; T) on 2T - 1 coordinates
    return (2 * T - 1) * (4 * T - 1) / (12.0 * T)


def make_cvx_instance(n, L, B, epsilon, *, dense=False, seed=None):
    """Convex sum of nonconvex components with dist(0, X*) = B exactly."""
    _positive(n=n, L=L, B=B, epsilon=epsilon)
    if epsilon > L * B * B / 4:
        raise HypothesisError(f"need epsilon <= L B^2 / 4 = {L * B * B / 4:.6g}")
    inputs = {"factory": "cvx", "n": n, "L": L, "B": B, "epsilon": epsilon}
    closed_form_T = math.ceil(B * math.sqrt(L) / (4 * n**0.25 * math.sqrt(epsilon)))
    notes = {
        "closed_form_T": closed_form_T,
        "closed_form_lower_bound": n * closed_form_T / 2,
        "printed_lower_bound": 8 * n**0.75 * B * math.sqrt(L / epsilon),
    }
    if epsilon <= L * B * B / (16 * math.sqrt(n)):
        R = 3 * L * B * B / (8 * math.sqrt(n) * epsilon)

        def half_floor(T):
            lam = L * B * B / (n * _nc_dist2(T))
            return lam * math.sqrt(n) / (32 * T)

        T = math.floor((6 + math.sqrt(4 + 32 * R)) / 16)
        while T >= 1 and half_floor(T) < epsilon:
            T -= 1
        while half_floor(T + 1) >= epsilon:
            T += 1
        if T >= 1:
            notes["branch"] = "chain"
            lam = L * B * B / (n * _nc_dist2(T))
            base = ChainFunctionSpec("nc", cf.NesterovCParams(T))
            inst = embed_sum(base, make_block_family(2 * T - 1, n, dense, seed))
            inst = rescale(inst, ScaleParams(lam, math.sqrt(lam / L)))
            # threshold: coordinates T .. 2T-1 of a block must vanish
            inst = replace(inst, metadata=replace(inst.metadata, progress_threshold=T))
            return _finalize(inst, "CVX", epsilon, T, inputs, notes)
    notes["branch"] = "omega: epsilon > L B^2 / (16 sqrt(n))"
    inst = make_omega_n_instance(n, L, B, "CVX")
    return replace(
        inst,
        inputs=inputs,
        metadata=replace(inst.metadata, target_epsilon=epsilon, notes=notes),
    )


def make_avg_nc_instance(n, L, sigma, Delta, epsilon, *, dense=False, seed=None):
    """Almost-convex F with average-smooth components; target is a small gradient."""
    _positive(n=n, L=L, sigma=sigma, Delta=Delta, epsilon=epsilon)
    cap = min(Delta * sigma, L * Delta / math.sqrt(n)) / 1e5
    if epsilon**2 > cap:
        raise HypothesisError(f"need epsilon^2 <= min(Delta sigma, L Delta / sqrt(n)) / 1e5 = {cap:.6g}")
    alpha = min(5 * sigma * math.sqrt(n) / (C_GAMMA * L), 1 / C_GAMMA)
    lam = 160 * epsilon**2 / (L * alpha**1.5)
    beta = math.sqrt(5 * lam / L)
    T = math.floor((Delta / (lam * math.sqrt(n)) - math.sqrt(alpha) / 2) / (10 * alpha))
    if T < 1:
        raise HypothesisError("no chain length T >= 1 keeps F(0) - inf F <= Delta")
    closed_form_T = L * Delta * math.sqrt(alpha) / (55 * math.sqrt(n) * epsilon**2)
    notes = {
        "branch": "sigma" if alpha < 1 / C_GAMMA else "L",
        "alpha": alpha,
        "closed_form_T": closed_form_T,
        "closed_form_lower_bound": n * closed_form_T / 2,
        "delta_bound_formula": lam * math.sqrt(n) * (math.sqrt(alpha) / 2 + 10 * alpha * T),
    }
    inputs = {"factory": "avg_nc", "n": n, "L": L, "sigma": sigma, "Delta": Delta, "epsilon": epsilon}
    base = ChainFunctionSpec("carmon", cf.CarmonParams(alpha, T))
    inst = embed_sum(base, make_block_family(T + 1, n, dense, seed))
    inst = rescale(inst, ScaleParams(lam, beta))
    return _finalize(inst, "AVG-NC", epsilon, T, inputs, notes)


def make_ind_nc_instance(n, L, sigma, Delta, epsilon, *, dense=False, seed=None):
    """Almost-convex components, each individually (-sigma, L)-smooth.

    Component i carries chain block i plus the shared separable penalty
    ``(alpha / n) * sum_j Gamma(U_j x)``.
    """
    _positive(n=n, L=L, sigma=sigma, Delta=Delta, epsilon=epsilon)
    cap = min(Delta * L / n, Delta * sigma) / 1e3
    if epsilon**2 > cap:
        raise HypothesisError(f"need epsilon^2 <= min(Delta L / n, Delta sigma) / 1e3 = {cap:.6g}")
    alpha = min(1.0, n / C_GAMMA, 5 * n * sigma / (C_GAMMA * L))
    lam = 160 * n * epsilon**2 / (L * alpha**1.5)
    beta = math.sqrt(5 * lam / L)
    T = math.floor((Delta / lam - math.sqrt(alpha) / 2) / (10 * alpha))
    if T < 1:
        raise HypothesisError("no chain length T >= 1 keeps F(0) - inf F <= Delta")
    base = ChainFunctionSpec("carmon", cf.CarmonParams(alpha, T))
    emb = make_block_family(T + 1, n, dense, seed)
    ac = alpha * C_GAMMA
    md = Metadata(
        avg_smooth_L=4 + ac / n,
        F_interval=(-ac / n, (4 + ac) / n),
        component_interval=(-ac / n, 4 + ac / n),
        delta_bound=float(cf.fc_eval(np.zeros(T + 1), base.params)[0]),
        dist_bound=math.sqrt(n * (T + 1)),
        optimum_value=0.0,
        progress_threshold=T,
        certificate_kind="GRADNORM",
        floor_coef=alpha**0.75 / (4 * n),
    )
    inst = FiniteSumInstance("IND-NC", n, emb, "shared_gamma", base, ScaleParams(), md)
    inst = rescale(inst, ScaleParams(lam, beta))
    closed_form_T = Delta * L * math.sqrt(min(1, 5 * n * sigma / (C_GAMMA * L))) / (1760 * n * epsilon**2)
    notes = {
        "alpha": alpha,
        "closed_form_T": closed_form_T,
        "closed_form_lower_bound": n * closed_form_T / 2,
        "delta_bound_formula": lam * (math.sqrt(alpha) / 2 + 10 * alpha * T),
    }
    inputs = {"factory": "ind_nc", "n": n, "L": L, "sigma": sigma, "Delta": Delta, "epsilon": epsilon}
    return _finalize(inst, "IND-NC", epsilon, T, inputs, notes)


FACTORIES = {
    "SC": make_sc_instance,
    "CVX": make_cvx_instance,
    "AVG-NC": make_avg_nc_instance,
    "IND-NC": make_ind_nc_instance,
}


def build(family: str, **params) -> FiniteSumInstance:
    """Dispatch on the family tag; OMEGA families take n, L and Delta (or B)."""
    if family in FACTORIES:
        return FACTORIES[family](**params)
    if family == "OMEGA-N":
        return make_omega_n_instance(params["n"], params["L"], params["Delta"], "SC")
    if family == "OMEGA-N-CVX":
        return make_omega_n_instance(params["n"], params["L"], params["B"], "CVX")
    raise ValueError(f"unknown family {family!r}")


def instance_from_dict(doc: dict) -> FiniteSumInstance:
    """Rebuild an instance from its JSON document by re-running its factory."""
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    inputs = dict(doc["inputs"])
    kind = inputs.pop("factory")
    emb = doc["embedding"]
    extra = {"dense": emb["dense"], "seed": emb["seed"]} if emb["dense"] else {}
    if kind == "omega":
        return make_omega_n_instance(**inputs)
    fn = {"sc": make_sc_instance, "cvx": make_cvx_instance,
          "avg_nc": make_avg_nc_instance, "ind_nc": make_ind_nc_instance}[kind]
    return fn(**inputs, **extra)


def epsilon_for_T(family: str, T: int, **params) -> float:
    """Largest-ish epsilon for which the family's factory picks chain length T.

    Bisects on log(epsilon); inputs that violate the hypothesis count as
    "T too small".
    """

    def chain_T(eps):
        try:
            inst = FACTORIES[family](epsilon=eps, **params)
        except HypothesisError:
            return 0
        if inst.structure == "omega":
            return 0
        return inst.metadata.progress_threshold

    lo, hi = 1e-300, None
    e = 1.0
    while chain_T(e) < T:
        e *= 0.5
        if e < 1e-200:
            raise ValueError(f"no epsilon reaches T={T}")
    lo = e
    hi = e * 2.0
    while chain_T(hi) >= T:
        lo, hi = hi, hi * 2.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if chain_T(mid) >= T:
            lo = mid
        else:
            hi = mid
    eps = lo
    if chain_T(eps) != T:
        raise ValueError(f"chain length jumps over T={T} for {family}")
    return eps
