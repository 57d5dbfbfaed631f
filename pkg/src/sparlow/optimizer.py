"""Geometric conjugate gradient ascent on (product of spheres) x Grassmannian."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GuardViolationError, NumericalError, ValidationError
from .manifold import (
    TangentPair,
    product_metric,
    product_norm,
    product_retract,
    product_transport,
    project_tangent,
    projector_defects,
    reproject_projector,
)
from .objective import Evaluation, SparLowProblem

ARMIJO_C1 = 1e-4
GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
REPROJECT_EVERY = 25


@dataclass
class CGConfig:
    """Stopping rules and line-search budget.

    ``restart_every`` defaults to the number of atoms when left as ``None``.
    ``ls_tol`` is the relative bracket width at which golden-section refinement stops.
    The optimizer draws no random numbers; ``seed`` is carried for provenance.
    """

    max_iters: int = 200
    step_tol: float = 1e-7
    grad_tol: float = 1e-6
    ls_max_evals: int = 40
    ls_tol: float = 1e-3
    restart_every: int | None = None
    seed: int = 0
    verbose: bool = False
    debug: bool = False
    fix_dictionary: bool = False
    force_beta_zero: bool = False

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValidationError("max_iters must be nonnegative")
        for name in ("step_tol", "grad_tol", "ls_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.ls_max_evals < 1:
            raise ValidationError("ls_max_evals must be positive")
        if self.restart_every is not None and self.restart_every < 1:
            raise ValidationError("restart_every must be positive")


@dataclass
class IterationRecord:
    iteration: int
    J: float
    grad_norm: float
    step: float
    beta: float
    accepted: bool
    evals: int = 0


@dataclass
class CGTrace:
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""
    stagnated: bool = False

    @property
    def iterations(self) -> int:
        return sum(1 for rec in self.records[1:] if rec.accepted)

    @property
    def J_values(self) -> np.ndarray:
        return np.array([rec.J for rec in self.records if rec.accepted])

    def is_monotone(self, tol: float = 1e-12) -> bool:
        J = self.J_values
        return bool(np.all(np.diff(J) >= -tol))


@dataclass
class LineSearchResult:
    t: float
    value: float
    evals: int
    stagnated: bool
    payload: object = None


def line_search(curve: Callable[[float], tuple[float, object]], J0: float, slope: float,
                t0: float = 1.0, max_evals: int = 40, tol: float = 1e-3,
                c1: float = ARMIJO_C1) -> LineSearchResult:
    """Approximate ``argmax_t J(curve(t))`` subject to the Armijo condition.

    ``curve(t)`` returns ``(J, payload)``; a :class:`NumericalError` raised by it
    counts as ``J = -inf``.  A doubling (or halving) bracket is followed by
    golden-section refinement.  The best Armijo point found is returned, or
    ``t = 0`` with ``stagnated`` set when none exists within ``max_evals``.
    """
    cache: dict[float, tuple[float, object]] = {}

    def f(t):
        if t not in cache:
            try:
                val, payload = curve(t)
            except NumericalError:
                val, payload = -math.inf, None
            if not math.isfinite(val):
                val = -math.inf
            cache[t] = (val, payload)
        return cache[t][0]

    def armijo(t):
        # strict increase guards against J0 + c1*t*slope rounding to J0
        val = f(t)
        return val > J0 and val >= J0 + c1 * t * slope

    if not (slope > 0 and math.isfinite(slope) and t0 > 0):
        return LineSearchResult(0.0, J0, 0, True)

    t = float(t0)
    if armijo(t):
        lo = 0.0
        while len(cache) < max_evals:
            nxt = 2.0 * t
            if armijo(nxt) and f(nxt) >= f(t):
                lo, t = t, nxt
            else:
                break
        hi = 2.0 * t
    else:
        while len(cache) < max_evals:
            t *= 0.5
            if armijo(t):
                break
        else:
            return LineSearchResult(0.0, J0, len(cache), True)
        lo, hi = 0.0, 2.0 * t

    # golden section on (lo, t, hi) when it is a genuine bracket
    f_lo = J0 if lo == 0.0 else f(lo)
    if hi in cache and f(hi) <= f(t) and f_lo <= f(t):
        a, b, c = lo, t, hi
        while len(cache) < max_evals and (c - a) > tol * b:
            if c - b > b - a:
                x = b + GOLDEN * (c - b)
            else:
                x = b - GOLDEN * (b - a)
            if f(x) > f(b):
                if x > b:
                    a, b = b, x
                else:
                    c, b = b, x
            else:
                if x > b:
                    c = x
                else:
                    a = x

    best = max((s for s in cache if cache[s][0] > -math.inf and armijo(s)), key=lambda s: (cache[s][0], -s))
    return LineSearchResult(best, cache[best][0], len(cache), False, cache[best][1])


def beta_kh(g_new: TangentPair, g_old_moved: TangentPair, h_dot_g_old: float) -> float:
    """``<G_new, G_new - T G_old> / <H_old, G_old>``, clamped at zero."""
    if not h_dot_g_old or not math.isfinite(h_dot_g_old):
        return 0.0
    beta = product_metric(g_new, g_new - g_old_moved) / h_dot_g_old
    if not math.isfinite(beta):
        return 0.0
    return max(beta, 0.0)


@dataclass
class OptimizeResult:
    D: np.ndarray
    P: np.ndarray
    trace: CGTrace
    evaluation: Evaluation


def _check_manifold(D, P, l, it):
    norms = np.linalg.norm(D, axis=0)
    if np.max(np.abs(norms - 1.0)) > 1e-10:
        raise GuardViolationError(f"iteration {it}: atom norms drifted by {np.max(np.abs(norms - 1)):.2e}")
    defects = projector_defects(P, l)
    if max(defects.values()) > 1e-8:
        raise GuardViolationError(f"iteration {it}: projector defects {defects}")


def optimize(problem: SparLowProblem, D0, P0, config: CGConfig | None = None,
             stream=None) -> OptimizeResult:
    """Maximize ``J`` from ``(D0, P0)`` by Riemannian CG.

    Each iteration computes the gradient, searches along the retraction curve,
    transports the previous direction and gradient, and mixes them with the
    clamped ``beta_kh`` coefficient.  Codes are re-encoded at every trial point
    unless ``config.fix_dictionary`` freezes ``D``.
    """
    config = config or CGConfig()
    stream = stream if stream is not None else sys.stderr
    D = np.array(D0, dtype=float)
    P = np.array(P0, dtype=float)
    r = D.shape[1]
    l = int(round(np.trace(P)))
    restart_every = config.restart_every or r
    frozen_codes = None

    def evaluate(Dt, Pt):
        return problem.evaluate(Dt, Pt, frozen_codes)

    def gradient(ev):
        G = problem.gradient(ev)
        if config.fix_dictionary:
            G = TangentPair(np.zeros_like(G.dict_dir), G.proj_dir)
        return G

    ev = evaluate(D, P)
    if config.fix_dictionary:
        frozen_codes = ev.codes
    G = gradient(ev)
    gnorm = product_norm(G)
    trace = CGTrace([IterationRecord(0, ev.J, gnorm, 0.0, 0.0, True)])

    def log(rec):
        if config.verbose:
            print(f"{rec.iteration}\t{rec.J:.12g}\t{rec.grad_norm:.6g}\t{rec.step:.6g}\t{rec.beta:.6g}",
                  file=stream)

    log(trace.records[0])
    H = G
    t_prev = 1.0 / gnorm if gnorm > 0 else 1.0
    it = 0
    while True:
        if gnorm <= config.grad_tol:
            trace.stop_reason = "grad_tol"
            break
        if it >= config.max_iters:
            trace.stop_reason = "max_iters"
            break
        it += 1
        slope = product_metric(G, H)
        if not (slope > 0 and math.isfinite(slope)):
            H, slope = G, gnorm**2

        def curve(t, H=H):
            Dt, Pt = product_retract(D, P, H, t)
            if config.fix_dictionary:
                Dt = D
            e = evaluate(Dt, Pt)
            return e.J, e

        ls = line_search(curve, ev.J, slope, t_prev, config.ls_max_evals, config.ls_tol)
        if ls.stagnated and H is not G:
            H, slope = G, gnorm**2
            ls = line_search(lambda t: curve(t, G), ev.J, slope, t_prev, config.ls_max_evals, config.ls_tol)
        if ls.stagnated:
            trace.records.append(IterationRecord(it, ev.J, gnorm, 0.0, 0.0, False, ls.evals))
            trace.stop_reason = "stagnation"
            trace.stagnated = True
            break

        t = ls.t
        new = ls.payload
        D1, P1 = new.D, new.P
        if it % REPROJECT_EVERY == 0:
            P1 = reproject_projector(P1, l)
            new = problem.evaluate(D1, P1, new.codes)
        G1 = gradient(new)

        beta = 0.0
        if not config.force_beta_zero and it % restart_every != 0:
            moved = product_transport(D, P, H, t, G)
            beta = beta_kh(G1, moved, slope)
        if beta > 0.0:
            H1 = project_tangent(D1, P1, G1 + beta * product_transport(D, P, H, t, H))
        else:
            H1 = G1

        step = math.sqrt(np.sum((D1 - D) ** 2) + np.sum((P1 - P) ** 2))
        D, P, ev, G, H = D1, P1, new, G1, H1
        gnorm = product_norm(G)
        t_prev = t
        rec = IterationRecord(it, ev.J, gnorm, t, beta, True, ls.evals)
        trace.records.append(rec)
        log(rec)
        if config.debug:
            _check_manifold(D, P, l, it)
        if step <= config.step_tol:
            trace.stop_reason = "step_tol"
            break

    return OptimizeResult(D, P, trace, ev)
