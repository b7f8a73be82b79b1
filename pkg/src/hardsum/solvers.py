"""Reference linear-span first-order methods driven through an OracleSession.

Each solver keeps its current iterate in ``self.x`` and advances through
``step``; the only access to the objective is ``session.query``.  Every
update is a linear combination of earlier points and returned gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hardsum.oracle import BudgetExhausted, Certificate, OracleSession


class RunAborted(RuntimeError):
    pass


class CertificateViolation(AssertionError):
    """A residual at or below target was observed while a certificate forbids it."""


@dataclass(frozen=True)
class SolverSpec:
    name: str
    hyper: dict = field(default_factory=dict)
    seed: int = 0


SOLVERS = ("gd", "agd", "sgd", "svrg", "spider")
OPTIONAL_SOLVERS = ("katyushax",)


def default_hyper(name: str, instance) -> dict:
    """Textbook hyperparameters; every value ends up explicit in the spec."""
    md = instance.metadata
    L = md.avg_smooth_L
    n = instance.n
    if name == "gd":
        return {"step": 1.0 / L}
    if name == "agd":
        mu = md.F_interval[0]
        if mu > 0:
            k = math.sqrt(L / mu)
            return {"step": 1.0 / L, "momentum": (k - 1) / (k + 1)}
        return {"step": 1.0 / L, "momentum": "schedule"}
    if name == "sgd":
        return {"step": 1.0 / (L * math.sqrt(n))}
    if name == "svrg":
        return {"step": 1.0 / (3.0 * L), "epoch_length": 2 * n}
    if name == "spider":
        eps = md.target_epsilon or 1e-3
        return {
            "step": eps / L,
            "max_step": 1.0 / (2.0 * L),
            "epoch_length": n,
            "batch": max(1, int(math.isqrt(n))),
        }
    if name == "katyushax":
        return {"step": 1.0 / (3.0 * L), "epoch_length": 2 * n, "momentum": 0.5}
    raise ValueError(f"unknown solver {name!r}")


def make_spec(name: str, instance, seed: int = 0, **overrides) -> SolverSpec:
    hyper = default_hyper(name, instance)
    unknown = set(overrides) - set(hyper)
    if unknown:
        raise ValueError(f"unknown hyperparameters for {name}: {sorted(unknown)}")
    hyper.update(overrides)
    return SolverSpec(name, hyper, seed)


# ---------------------------------------------------------------- solvers


class _Solver:
    def __init__(self, spec: SolverSpec, session: OracleSession):
        self.spec = spec
        self.h = spec.hyper
        self.session = session
        self.n = session.instance.n
        self.x = np.zeros(session.instance.d)
        self.rng = np.random.default_rng(spec.seed)

    def full_grad(self, x, keep=False):
        g = np.zeros_like(x)
        parts = [] if keep else None
        for i in range(self.n):
            gi = self.session.query(i, x)[1]
            g += gi
            if keep:
                parts.append(gi)
        g /= self.n
        return (g, parts) if keep else g


class GD(_Solver):
    def step(self):
        self.x = self.x - self.h["step"] * self.full_grad(self.x)


class AGD(_Solver):
    def __init__(self, spec, session):
        super().__init__(spec, session)
        self.prev = self.x.copy()
        self.k = 0

    def step(self):
        mom = self.h["momentum"]
        beta = self.k / (self.k + 3.0) if mom == "schedule" else float(mom)
        y = self.x + beta * (self.x - self.prev)
        g = self.full_grad(y)
        self.prev = self.x
        self.x = y - self.h["step"] * g
        self.k += 1


class SGD(_Solver):
    def step(self):
        i = int(self.rng.integers(self.n))
        self.x = self.x - self.h["step"] * self.session.query(i, self.x)[1]


class SVRG(_Solver):
    """Snapshot full gradient, then ``epoch_length`` variance-reduced steps."""

    def epoch(self, x0):
        mu, snap = self.full_grad(x0, keep=True)
        x = x0
        self.x = x
        for _ in range(int(self.h["epoch_length"])):
            i = int(self.rng.integers(self.n))
            v = self.session.query(i, x)[1] - snap[i] + mu
            x = x - self.h["step"] * v
            self.x = x
        return x

    def step(self):
        self.x = self.epoch(self.x)


class KatyushaX(SVRG):
    """SVRG epochs with momentum extrapolation between snapshots."""

    def __init__(self, spec, session):
        super().__init__(spec, session)
        self.y = self.x.copy()

    def step(self):
        prev = self.x
        new = self.epoch(self.y)
        self.y = new + self.h["momentum"] * (new - prev)
        self.x = new


class SPIDER(_Solver):
    """Recursive gradient estimator with normalized steps."""

    def __init__(self, spec, session):
        super().__init__(spec, session)
        self.v = None
        self.k = 0

    def step(self):
        q = int(self.h["epoch_length"])
        b = int(self.h["batch"])
        if self.k % q == 0:
            self.v = self.full_grad(self.x)
        else:
            idx = self.rng.integers(self.n, size=b)
            acc = np.zeros_like(self.x)
            for i in idx:
                acc += self.session.query(int(i), self.x)[1] - self.session.query(int(i), self.prev)[1]
            self.v = self.v + acc / b
        nv = float(np.linalg.norm(self.v))
        eta = self.h["max_step"] if nv == 0 else min(self.h["step"] / nv, self.h["max_step"])
        self.prev = self.x
        self.x = self.x - eta * self.v
        self.k += 1


_CLASSES = {"gd": GD, "agd": AGD, "sgd": SGD, "svrg": SVRG, "spider": SPIDER, "katyushax": KatyushaX}


# ---------------------------------------------------------------- driver


@dataclass
class RunResult:
    solver: str
    hyper: dict
    seed: int
    ifo_to_target: int | None
    residual_curve: list
    certificate_curve: list
    ifo_used: int
    final_x: np.ndarray | None = None

    @property
    def exhausted(self) -> bool:
        return self.ifo_to_target is None

    def best_so_far(self) -> list:
        out, best = [], math.inf
        for t, r in self.residual_curve:
            best = min(best, r)
            out.append((t, best))
        return out


class _Done(Exception):
    pass


def run(solver: SolverSpec, session: OracleSession, budget: int, target: float, *, record=True):
    """Drive ``solver`` until its iterate's residual is <= target or the budget ends.

    The residual is checked after every IFO call against the solver's current
    iterate, so ``ifo_to_target`` is the exact call count at first success.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if session.ifo_count != 0:
        raise ValueError("run needs a fresh session")
    inst = session.instance
    session.budget = int(budget)
    algo = _CLASSES[solver.name](solver, session)
    residuals: list = []
    certs: list[Certificate] = []
    hit = {"t": None}
    # solvers rebind self.x on every update, so identity means "unchanged"
    last = {"x": None, "res": None}

    def observe(_s=None):
        x = algo.x
        if x is last["x"]:
            res = last["res"]
        else:
            if not np.all(np.isfinite(x)):
                raise RunAborted(f"{solver.name} produced a non-finite iterate at IFO {session.ifo_count}")
            res = inst.residual(x)
            last["x"], last["res"] = x, res
        cert = session.certificate(x)
        if record:
            residuals.append((session.ifo_count, res))
            certs.append(cert)
        if res <= target:
            if cert.floor_value > target:
                raise CertificateViolation(
                    f"residual {res:.3e} <= target {target:.3e} at IFO {session.ifo_count} "
                    f"while the certificate floor is {cert.floor_value:.3e}"
                )
            hit["t"] = session.ifo_count
            raise _Done

    session.observer = observe
    try:
        observe()
        while True:
            algo.step()
            observe()
    except _Done:
        pass
    except BudgetExhausted:
        pass
    finally:
        session.observer = None
    return RunResult(
        solver=solver.name,
        hyper=dict(solver.hyper),
        seed=solver.seed,
        ifo_to_target=hit["t"],
        residual_curve=residuals,
        certificate_curve=certs,
        ifo_used=session.ifo_count,
        final_x=algo.x.copy(),
    )


# ---------------------------------------------------------------- variance check


@dataclass
class VarianceReport:
    samples: int
    violations: int
    avg_smooth_violations: int
    max_ratio: float
    max_avg_ratio: float
    full_violations: int = 0


def variance_check(instance, x_hat, samples: int = 100, *, seed: int = 0, radius=None,
                   points=None, slack: float = 1e-9) -> VarianceReport:
    """Check the SVRG-estimator variance bound against ``2 L^2 |x - x_hat|^2``.

    Also counts failures of ``|grad F(x) - grad F(x_hat)|^2 <= E_i |grad f_i(x)
    - grad f_i(x_hat)|^2 <= L^2 |x - x_hat|^2``.  Every expectation is the
    exact component average, not a sample.
    """
    L = instance.metadata.avg_smooth_L
    x_hat = np.asarray(x_hat, dtype=float)
    rng = np.random.default_rng(seed)
    if radius is None:
        radius = instance.scale.beta
    gh = instance.component_grads(x_hat)
    if points is None:
        points = (x_hat + radius * rng.standard_normal(instance.d) for _ in range(samples))
    viol = avg_viol = full_viol = 0
    max_r = max_a = 0.0
    count = 0
    for x in points:
        count += 1
        g = instance.component_grads(x)
        diff = g - gh
        mean = diff.mean(axis=0)
        var = float(np.mean(np.sum((diff - mean) ** 2, axis=1)))
        avg = float(np.mean(np.sum(diff * diff, axis=1)))
        dx = float(np.sum((np.asarray(x) - x_hat) ** 2))
        rhs = L * L * dx
        if var > 2 * rhs * (1 + slack):
            viol += 1
        if avg > rhs * (1 + slack):
            avg_viol += 1
        if float(mean @ mean) > avg * (1 + slack) + 1e-300:
            full_viol += 1
        if rhs > 0:
            max_r = max(max_r, var / (2 * rhs))
            max_a = max(max_a, avg / rhs)
    return VarianceReport(count, viol, avg_viol, max_r, max_a, full_viol)
