"""Minimizers used for pulse and network training.

``lbfgs_minimize`` is a limited-memory BFGS with a strong-Wolfe line search
(N&W Algorithms 3.5/3.6 with cubic interpolation). Box bounds are handled by
projecting the search direction: components that would leave an active
bound are dropped, and the step length is capped at the first bound
crossing. This is enough for the mostly unconstrained problems here; it is
not the full Cauchy-point/subspace method of L-BFGS-B.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Oracle = Callable[[np.ndarray], tuple[float, np.ndarray]]


class NonFiniteObjective(FloatingPointError):
    pass


class LineSearchFailure(RuntimeError):
    """Not raised by the minimizers (they flag and return the best iterate); available to callers."""


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iter: int = 500
    grad_tol: float = 1e-9
    f_tol: float = 1e-12
    bounds: Sequence[tuple[float, float]] | None = None
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    max_wall_s: float | None = None

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.grad_tol <= 0 or self.f_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class TraceRow:
    iter: int
    f: float
    grad_norm: float
    wall_ms: float


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    trace: list[TraceRow] = field(default_factory=list)
    n_iter: int = 0
    n_eval: int = 0
    converged: bool = False
    line_search_failure: bool = False
    message: str = ""

    def __iter__(self):
        return iter((self.x, self.f, self.trace))


def write_trace_csv(path, trace: Sequence[TraceRow], comments: Sequence[str] = ()) -> None:
    """Columns ``iter, f, grad_norm, wall_ms``, after optional ``# ...`` comment lines."""
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(["iter", "f", "grad_norm", "wall_ms"])
        for r in trace:
            w.writerow([r.iter, f"{r.f:.17g}", f"{r.grad_norm:.17g}", f"{r.wall_ms:.3f}"])


# ---------------------------------------------------------------------------
# bounds helpers


def _bounds_arrays(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    b = np.asarray(bounds, dtype=float)
    if b.shape != (n, 2):
        raise ValueError(f"bounds must have shape ({n}, 2)")
    if np.any(b[:, 0] > b[:, 1]):
        raise ValueError("lower bound above upper bound")
    return b[:, 0].copy(), b[:, 1].copy()


def _free_mask(x, g, lo, hi):
    """Variables not pinned at a bound by a gradient pointing outward."""
    at_lo = (x <= lo) & (g > 0)
    at_hi = (x >= hi) & (g < 0)
    return ~(at_lo | at_hi)


def _max_step(x, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(d > 0, (hi - x) / d, np.inf)
        dn = np.where(d < 0, (lo - x) / d, np.inf)
    return float(min(np.min(up, initial=np.inf), np.min(dn, initial=np.inf)))


_EPS = np.finfo(float).eps

# ---------------------------------------------------------------------------
# strong-Wolfe line search


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic through (a, fa, ga), (b, fb, gb); None if degenerate."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    den = gb - ga + 2.0 * d2
    if den == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / den


def _line_search(phi, f0, g0, alpha0, alpha_max, c1, c2, max_ls):
    """Return ``(alpha, f, g_vec, dphi, ok, n_eval)``; ``ok`` is False when Wolfe was not met."""
    n_eval = 0
    best = None  # best point with sufficient decrease

    def ev(a):
        nonlocal n_eval, best
        n_eval += 1
        f, g, dg = phi(a)
        if decrease(a, f, dg) and (best is None or f < best[1]):
            best = (a, f, g, dg)
        return f, g, dg

    # Near a minimum, differences in f sink into rounding noise. Inside that
    # band sufficient decrease is judged from the slope instead (the two tests
    # coincide on a quadratic) and comparisons of f are skipped.
    f_noise = 1e-10 * max(abs(f0), 1e-300)

    def close(fa, fb):
        return abs(fa - fb) <= f_noise

    def decrease(a, f, dg):
        if not np.isfinite(f):
            return False
        return f <= f0 + c1 * a * g0 or (f <= f0 and close(f, f0) and dg <= (2 * c1 - 1) * g0)

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        while n_eval < max_ls:
            if not np.isfinite(fhi):
                a = None
            elif close(flo, fhi):
                a = lo - dlo * (hi - lo) / (dhi - dlo) if dhi != dlo else None
            else:
                a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            if a is None or not left < a < right:
                a = lo + 0.5 * (hi - lo)
            else:
                # keep the trial a safe distance from both ends of the bracket
                m = 0.1 * (right - left)
                a = min(max(a, left + m), right - m)
            f, g, dg = ev(a)
            if not decrease(a, f, dg) or (f >= flo and not close(f, flo)):
                hi, fhi, dhi = a, f, dg
            else:
                if abs(dg) <= -c2 * g0:
                    return a, f, g, dg, True
                if dg * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, f, dg
        return None

    a_prev, f_prev, d_prev = 0.0, f0, g0
    a = min(alpha0, alpha_max)
    i = 0
    while n_eval < max_ls:
        i += 1
        f, g, dg = ev(a)
        if not decrease(a, f, dg) or (i > 1 and f >= f_prev and not close(f, f_prev)):
            r = zoom(a_prev, f_prev, d_prev, a, f, dg)
            break
        if abs(dg) <= -c2 * g0:
            return a, f, g, dg, True, n_eval
        if dg >= 0:
            r = zoom(a, f, dg, a_prev, f_prev, d_prev)
            break
        if a >= alpha_max:
            # bound reached while still descending: accept the boundary point
            return a, f, g, dg, True, n_eval
        a_prev, f_prev, d_prev = a, f, dg
        a = min(2.0 * a, alpha_max)
    else:
        r = None
    if r is not None:
        return (*r, n_eval)
    if best is not None:
        return (*best, False, n_eval)
    return None, None, None, None, False, n_eval


# ---------------------------------------------------------------------------
# L-BFGS


def lbfgs_minimize(oracle: Oracle, x0, cfg: LbfgsConfig = LbfgsConfig(), callback=None) -> OptimResult:
    """Minimise ``f`` given ``oracle(x) -> (f, grad)``.

    Stops when the projected gradient's max-norm is below ``grad_tol``, when
    the relative decrease of ``f`` over one iteration is below ``f_tol``, at
    ``max_iter``, or when ``callback(it, x, f)`` returns True. A step that
    decreases ``f`` without meeting the curvature condition is kept and the
    memory is reset; a second such step in a row, or a search with no
    decrease, ends the run with ``line_search_failure`` set and the best
    iterate returned.
    """
    t_start = time.perf_counter()
    x = np.array(x0, dtype=float)
    n = x.size
    lo, hi = _bounds_arrays(cfg.bounds, n)
    x = np.clip(x, lo, hi)
    f, g = oracle(x)
    f, g = float(f), np.asarray(g, dtype=float)
    n_eval = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteObjective("objective or gradient is not finite at the starting point")
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    res = OptimResult(x, f)

    def proj_gnorm(x, g):
        m = _free_mask(x, g, lo, hi)
        return float(np.max(np.abs(g[m]), initial=0.0))

    def log(it):
        res.trace.append(TraceRow(it, f, proj_gnorm(x, g), 1e3 * (time.perf_counter() - t_start)))

    log(0)
    it = 0
    weak_prev = False
    while True:
        if res.trace[-1].grad_norm <= cfg.grad_tol:
            res.converged, res.message = True, "gradient tolerance reached"
            break
        if it >= cfg.max_iter:
            res.message = "iteration limit"
            break
        if cfg.max_wall_s is not None and time.perf_counter() - t_start > cfg.max_wall_s:
            res.message = "wall-clock limit"
            break
        free = _free_mask(x, g, lo, hi)
        # two-loop recursion on the free variables
        q = np.where(free, g, 0.0)
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append(a)
            q = q - a * y
        gamma = (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1]) if S else 1.0
        r = gamma * q
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            rho = 1.0 / (y @ s)
            r = r + s * (a - rho * (y @ r))
        d = np.where(free, -r, 0.0)
        if d @ g >= 0:
            S.clear(), Y.clear()
            d = np.where(free, -g, 0.0)
        dphi0 = float(d @ g)
        alpha_max = _max_step(x, d, lo, hi)
        alpha0 = 1.0 if S else min(1.0, 1.0 / max(np.max(np.abs(d)), 1e-300))

        def phi(a, x=x, d=d):
            xt = np.clip(x + a * d, lo, hi)
            ft, gt = oracle(xt)
            gt = np.asarray(gt, dtype=float)
            ft = float(ft) if np.all(np.isfinite(gt)) else np.inf
            return ft, gt, float(gt @ d)

        a, f_new, g_new, _, ok, ne = _line_search(phi, f, dphi0, alpha0, alpha_max, cfg.c1, cfg.c2, cfg.max_ls)
        n_eval += ne
        it += 1
        if a is None:
            res.line_search_failure, res.message = True, "line search found no decrease"
            break
        x_new = np.clip(x + a * d, lo, hi)
        s, y = x_new - x, g_new - g
        f_old = f
        x, f, g = x_new, f_new, g_new
        if s @ y > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            S.append(s), Y.append(y)
            if len(S) > cfg.memory:
                S.pop(0), Y.pop(0)
        log(it)
        if callback is not None and callback(it, x, f):
            res.message = "stopped by callback"
            break
        if not ok:
            # a decrease without the curvature condition: restart from steepest descent once
            if weak_prev:
                res.line_search_failure, res.message = True, "strong Wolfe conditions not met"
                break
            S.clear(), Y.clear()
        weak_prev = not ok
        # changes at rounding level say nothing about convergence; leave those to the gradient test
        df = f_old - f
        if 4 * _EPS * max(abs(f_old), abs(f)) < df <= cfg.f_tol * max(abs(f_old), abs(f), 1.0):
            res.converged, res.message = True, "function tolerance reached"
            break
    res.x, res.f, res.n_iter, res.n_eval = x, f, it, n_eval
    return res


# ---------------------------------------------------------------------------
# Adam


def adam_minimize(oracle: Oracle, x0, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8, max_iter: int = 1000, grad_tol: float = 0.0,
                  callback=None, max_wall_s: float | None = None) -> OptimResult:
    """Adam with bias correction; returns the last iterate."""
    t_start = time.perf_counter()
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    res = OptimResult(x, np.nan)
    for t in range(1, max_iter + 2):
        f, g = oracle(x)
        f, g = float(f), np.asarray(g, dtype=float)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise NonFiniteObjective(f"non-finite objective at iteration {t - 1}")
        gn = float(np.max(np.abs(g), initial=0.0))
        res.trace.append(TraceRow(t - 1, f, gn, 1e3 * (time.perf_counter() - t_start)))
        res.x, res.f, res.n_iter, res.n_eval = x, f, t - 1, t
        if gn <= grad_tol:
            res.converged, res.message = True, "gradient tolerance reached"
            break
        if t > max_iter:
            res.message = "iteration limit"
            break
        if callback is not None and t > 1 and callback(t - 1, x, f):
            res.message = "stopped by callback"
            break
        if max_wall_s is not None and time.perf_counter() - t_start > max_wall_s:
            res.message = "wall-clock limit"
            break
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
    return res


# ---------------------------------------------------------------------------
# random restarts


@dataclass(frozen=True)
class RestartPolicy:
    n_guesses: int = 5
    seed: int = 0
    selector: str = "train_objective"

    def __post_init__(self):
        if self.n_guesses < 1:
            raise ValueError("n_guesses must be >= 1")
        if self.selector not in ("train_objective", "test_infidelity"):
            raise ValueError(f"unknown selector {self.selector!r}")


@dataclass
class RestartOutcome:
    best: object
    index: int
    seed: int
    metrics: list[float]
    results: list
    errors: list


def random_restart(run: Callable[[int], object], policy: RestartPolicy,
                   metric: Callable[[object], float] | None = None) -> RestartOutcome:
    """Run ``run(seed + i)`` for ``i < n_guesses`` and keep the lowest metric.

    ``metric`` defaults to the attribute named by ``policy.selector`` if the
    result has it, else to ``result.f``. Ties go to the lowest seed. Failing
    trials are skipped unless all of them fail.
    """
    if metric is None:
        def metric(r):
            return float(getattr(r, policy.selector, getattr(r, "f", np.nan)))
    results, metrics, errors = [], [], []
    for i in range(policy.n_guesses):
        try:
            r = run(policy.seed + i)
        except Exception as exc:  # noqa: BLE001 - re-raised if every trial fails
            results.append(None)
            metrics.append(np.inf)
            errors.append(exc)
            continue
        results.append(r)
        m = metric(r)
        metrics.append(float(m) if np.isfinite(m) else np.inf)
        errors.append(None)
    if all(r is None for r in results):
        raise errors[-1]
    idx = int(np.argmin(metrics))  # first occurrence = lowest seed
    return RestartOutcome(results[idx], idx, policy.seed + idx, metrics, results, errors)
