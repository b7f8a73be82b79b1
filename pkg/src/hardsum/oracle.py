"""Counting IFO, zero-chain progress tracking, certificates and span audits."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from hardsum.instance import FiniteSumInstance


class ZeroChainViolation(RuntimeError):
    """A query or iterate reached coordinates no span algorithm could reach yet."""


class BudgetExhausted(RuntimeError):
    pass


class SessionClosed(RuntimeError):
    pass


class AuditRefused(RuntimeError):
    """Raised when a trace lacks the stored points an audit needs."""


@dataclass(frozen=True)
class TraceRecord:
    t: int
    component: int
    point_id: int
    grad_norm: float
    prefix_digest: str


@dataclass(frozen=True)
class Certificate:
    step: int
    kind: str
    floor_value: float
    blocks_below_threshold: int


def block_activation(blocks: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """1-based index of the last coordinate with ``|v| > tol`` in each row (0 if none)."""
    mask = np.abs(blocks) > tol
    a = blocks.shape[-1]
    last = a - np.argmax(mask[..., ::-1], axis=-1)
    return np.where(mask.any(axis=-1), last, 0)


class OracleSession:
    """Mediates every component evaluation of one run.

    ``prefix_profile[j]`` is the reachable prefix of block ``j``: the number
    of leading block coordinates a linear-span method can have made nonzero
    given the calls so far.  A call to component ``i`` at a point whose
    block ``i`` is active up to ``k`` can raise it to at most ``k + 1``.
    ``activated`` records the largest activation actually seen in queried
    points.
    """

    def __init__(
        self,
        instance: FiniteSumInstance,
        *,
        seed: int = 0,
        store_points: bool = True,
        tol: float = 0.0,
        strict: bool = True,
        budget: int | None = None,
        observer=None,
    ):
        self.instance = instance
        self.rng_seed = int(seed) & (2**64 - 1)
        self.store_points = store_points
        self.tol = tol
        self.strict = strict
        self.budget = budget
        self.observer = observer
        n = instance.n
        self.ifo_count = 0
        self.per_component_counts = np.zeros(n, dtype=np.int64)
        self.prefix_profile = np.zeros(n, dtype=np.int64)
        self.activated = np.zeros(n, dtype=np.int64)
        self.trace: list[TraceRecord] = []
        self.violations: list[tuple] = []
        self._ids: dict[bytes, int] = {}
        self._points: list[np.ndarray] = []
        self._grads: list[np.ndarray] = []
        self._last_floor = None
        self.closed = False

    def close(self):
        self.closed = True

    # ---- oracle

    def _point_id(self, x):
        key = hashlib.sha1(x.tobytes()).digest()
        pid = self._ids.get(key)
        if pid is None:
            pid = len(self._ids)
            self._ids[key] = pid
            if self.store_points:
                self._points.append(x.copy())
        return pid

    def query(self, i: int, x):
        """Return ``(f_i(x), grad f_i(x))`` and update counters and progress."""
        if self.closed:
            raise SessionClosed("session is closed")
        if self.budget is not None and self.ifo_count >= self.budget:
            raise BudgetExhausted(f"IFO budget {self.budget} used up")
        inst = self.instance
        x = np.asarray(x, dtype=float)
        if x.shape != (inst.d,):
            raise ValueError(f"expected point of shape ({inst.d},), got {x.shape}")
        i = int(i)
        inst._check_index(i)

        act = block_activation(inst.embedding.to_blocks(x), self.tol)
        over = np.nonzero(act > self.prefix_profile)[0]
        if over.size:
            j = int(over[0])
            msg = (
                f"query {self.ifo_count}: block {j} active up to {act[j]} "
                f"but only {self.prefix_profile[j]} coordinates are reachable"
            )
            if self.strict:
                raise ZeroChainViolation(msg)
            self.violations.append((self.ifo_count, j, int(act[j]), int(self.prefix_profile[j])))
            self.prefix_profile = np.maximum(self.prefix_profile, act)

        old = int(self.prefix_profile[i])
        new = max(old, min(int(act[i]) + 1, inst.block_dim))
        if new - old > 1:
            raise ZeroChainViolation(f"block {i} prefix jumped from {old} to {new}")
        self.prefix_profile[i] = new
        np.maximum(self.activated, act, out=self.activated)

        value, grad = inst.component(i, x)
        pid = self._point_id(x)
        if self.store_points:
            self._grads.append(grad.copy())
        self.trace.append(
            TraceRecord(
                t=self.ifo_count,
                component=i,
                point_id=pid,
                grad_norm=float(np.linalg.norm(grad)),
                prefix_digest=hashlib.sha1(self.prefix_profile.tobytes()).hexdigest()[:12],
            )
        )
        self.ifo_count += 1
        self.per_component_counts[i] += 1
        if self.observer is not None:
            self.observer(self)
        return value, grad

    # ---- certificates

    def blocks_below_threshold(self) -> int:
        return int(np.sum(self.prefix_profile < self.instance.metadata.progress_threshold))

    def certificate(self, x=None) -> Certificate:
        """Certified floor on the residual of any iterate reachable now.

        When ``x`` is given it is checked to lie inside the reachable
        prefixes; an iterate outside them voids the certificate.
        """
        inst = self.instance
        if x is not None:
            act = block_activation(inst.embedding.to_blocks(np.asarray(x, dtype=float)), self.tol)
            if np.any(act > self.prefix_profile):
                raise ZeroChainViolation("iterate lies outside the reachable prefixes")
        c = self.blocks_below_threshold()
        floor = inst.certified_floor(c)
        if self._last_floor == 0.0 and floor > 0.0:
            raise AssertionError("certificate reappeared after the predicate failed")
        self._last_floor = floor
        return Certificate(self.ifo_count, inst.metadata.certificate_kind, floor, c)

    # ---- trace access

    def points(self):
        if not self.store_points:
            raise AuditRefused("session was opened without point storage")
        return [self._points[r.point_id] for r in self.trace], list(self._grads)

    def audit(self, tol: float = 1e-8, iterates=None):
        pts, grads = self.points()
        return span_audit(pts, grads, tol=tol, iterates=iterates)

    def export_trace(self, fh):
        """Write the trace as JSON lines, one record per IFO call."""
        for rec in self.trace:
            fh.write(json.dumps(asdict(rec)) + "\n")


# ---------------------------------------------------------------- span audit


@dataclass
class AuditReport:
    passed: bool
    checked: int
    violations: list = field(default_factory=list)  # (label, relative residual)
    max_residual: float = 0.0


class _SpanBasis:
    def __init__(self, d):
        self.q = np.zeros((d, 0))

    def residual(self, v):
        r = v - self.q @ (self.q.T @ v)
        return r - self.q @ (self.q.T @ r)

    def add(self, v):
        nv = np.linalg.norm(v)
        if nv == 0.0 or self.q.shape[1] >= self.q.shape[0]:
            return
        r = self.residual(v)
        nr = np.linalg.norm(r)
        if nr > 1e-12 * nv:
            self.q = np.column_stack([self.q, r / nr])


def span_audit(points, grads, tol: float = 1e-8, iterates=None, max_dim: int = 4096) -> AuditReport:
    """Check each query point against the span of earlier points and gradients.

    ``points[t]`` must satisfy ``|r_t| <= tol * |points[t]|`` where ``r_t``
    is its least-squares residual against ``Lin{points[:t], grads[:t]}``.
    ``iterates`` is an optional list of ``(t, x)``: ``x`` is checked against
    the span of the first ``t`` records.  Violations are labelled by step
    (an int) or ``("iterate", t)``.
    """
    if points is None or grads is None or len(points) != len(grads):
        raise AuditRefused("audit needs every query point and returned gradient")
    if any(p is None for p in points):
        raise AuditRefused("trace is missing stored points")
    if not points:
        return AuditReport(True, 0)
    d = len(points[0])
    if d > max_dim:
        raise AuditRefused(f"dimension {d} exceeds audit cap {max_dim}")
    extra = sorted(iterates or [], key=lambda p: p[0])
    basis = _SpanBasis(d)
    report = AuditReport(True, 0)
    k = 0

    def check(label, x):
        x = np.asarray(x, dtype=float)
        nx = np.linalg.norm(x)
        rel = 0.0 if nx == 0.0 else np.linalg.norm(basis.residual(x)) / nx
        report.checked += 1
        report.max_residual = max(report.max_residual, rel)
        if rel > tol:
            report.violations.append((label, rel))
            report.passed = False

    for t, (p, g) in enumerate(zip(points, grads)):
        while k < len(extra) and extra[k][0] <= t:
            check(("iterate", extra[k][0]), extra[k][1])
            k += 1
        check(t, p)
        basis.add(np.asarray(p, dtype=float))
        basis.add(np.asarray(g, dtype=float))
    for t, x in extra[k:]:
        check(("iterate", t), x)
    return report
