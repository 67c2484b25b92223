"""Mean ergodic theorem for contraction cocycles on finite-dimensional spaces.

A :class:`NormedCocycle` is a table of real ``d x d`` matrices, each a
contraction for one of three vector norms. For a per-fiber vector table ``f``
the averages ``(A^n f)(w) = (1/n) sum_(k<n) R_k f_(s^-k w)``, with ``R_k`` the
pullback product, converge on every fiber to an equivariant ``h``. The
difference ``f - h`` then splits as ``L g - g + r`` with ``r`` as small as
requested, ``L`` being the lift; :func:`coboundary_fit` finds such a ``g`` by
least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import averaging
from .core import LinearCocycle, MarkovCocycle
from .driving import DrivingSystem, FiniteCycle

NORMS = ("absolute-sum", "euclidean", "max")
CONTRACTION_SLACK = 1e-12
POWER_TOL = 1e-10
MET_N_MAX = 2**40
STEP_N_MAX = 2**20


class ContractionError(ValueError):
    pass


def vector_norm(kind: str) -> Callable[[np.ndarray], float]:
    if kind == "absolute-sum":
        return lambda v: float(np.abs(v).sum())
    if kind == "euclidean":
        return lambda v: float(np.sqrt(np.dot(v, v)))
    if kind == "max":
        return lambda v: float(np.abs(v).max()) if v.size else 0.0
    raise ValueError(f"unknown norm {kind!r}; expected one of {NORMS}")


def spectral_norm(m: np.ndarray, tol: float = POWER_TOL, max_iter: int = 100_000) -> float:
    """Largest singular value by power iteration on ``M^T M``."""
    g = m.T @ m
    d = g.shape[0]
    # fixed, generic start so a zero component in an eigenbasis is unlikely
    x = np.cos(np.arange(1, d + 1) * 0.7071) + 1.5
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = g @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        new = float(x @ y)
        x = y / ny
        if abs(new - lam) <= tol * max(new, 1.0):
            lam = new
            break
        lam = new
    return float(np.sqrt(max(lam, 0.0)))


def operator_norm(m: np.ndarray, kind: str) -> float:
    m = np.asarray(m, dtype=float)
    if kind == "absolute-sum":
        return float(np.abs(m).sum(axis=0).max())
    if kind == "max":
        return float(np.abs(m).sum(axis=1).max())
    if kind == "euclidean":
        return spectral_norm(m)
    raise ValueError(f"unknown norm {kind!r}")


class NormedCocycle(LinearCocycle):
    """Linear cocycle with a chosen vector norm, contracting by default."""

    def __init__(self, generators: Sequence, driving: DrivingSystem, norm: str = "absolute-sum",
                 label_of=None, check: bool = True):
        super().__init__(generators, driving, label_of)
        self.norm_kind = norm
        self.norm = vector_norm(norm)
        if check:
            worst = contraction_check(self)
            if worst > 1.0 + CONTRACTION_SLACK:
                raise ContractionError(f"generator norm {worst!r} exceeds 1 in the {norm} norm")

    @classmethod
    def from_markov(cls, c: MarkovCocycle) -> "NormedCocycle":
        return cls(c.matrices, c.driving, "absolute-sum", c._label_of)


def contraction_check(c: NormedCocycle) -> float:
    return max(operator_norm(m, c.norm_kind) for m in c.matrices)


# --- Cesàro averages --------------------------------------------------------


def fiber_values(c: LinearCocycle, f) -> Callable[[int], np.ndarray]:
    """Turn ``f`` into ``w -> f_w``.

    Accepted: a callable, a single vector (constant in ``w``), a table keyed by
    fiber (finite drivers), or a table keyed by label (other drivers).
    """
    if callable(f):
        return lambda w: np.asarray(f(w), dtype=float)
    if isinstance(f, Mapping):
        if isinstance(c.driving, FiniteCycle):
            return lambda w: np.asarray(f[w], dtype=float)
        return lambda w: np.asarray(f[c.driving.label(w)], dtype=float)
    v = np.asarray(f, dtype=float)
    return lambda w: v


@dataclass
class CesaroState:
    """Running sum of the averages at one fiber."""

    fiber: int
    running_sum: np.ndarray
    n: int
    delta: float = float("inf")

    @property
    def average(self) -> np.ndarray:
        return self.running_sum / self.n

    def recompute(self, c: LinearCocycle, f) -> np.ndarray:
        """The same sum rebuilt term by term from the cocycle."""
        fv = fiber_values(c, f)
        total = np.zeros(c.dim)
        r = np.eye(c.dim)
        u = self.fiber
        for k in range(self.n):
            total += r @ fv(u)
            u = c.driving.step_inv(u)
            r = r @ c.matrix_at(u)
        return total


def _terms(c: LinearCocycle, w: int, fv) -> object:
    r = np.eye(c.dim)
    u = w
    while True:
        yield r @ fv(u)
        u = c.driving.step_inv(u)
        r = r @ c.matrix_at(u)


def _stochastic(c: LinearCocycle) -> bool:
    return all(np.all(m >= 0) and np.allclose(m.sum(axis=0), 1.0, atol=1e-14, rtol=0)
               for m in c.matrices)


def average_sums(c: LinearCocycle, w: int, f):
    """``n -> S_n`` at fiber ``w`` in closed form (finite drivers only)."""
    if not isinstance(c.driving, FiniteCycle):
        raise TypeError("closed-form sums need a finite driver")
    fv = fiber_values(c, f)
    period = c.driving.n
    seeds = [fv(c.driving.shift(w, -r)) for r in range(period)]
    return averaging.periodic_partial_sums(c.pullback_products(w, period), seeds,
                                           _stochastic(c))


def cesaro_iterate(c: NormedCocycle, w: int, f, tol: float = 1e-9,
                   n_max: int | None = None) -> tuple[np.ndarray, int, bool]:
    """``(h(w), n, converged)`` for the averages at fiber ``w``."""
    norm = getattr(c, "norm", averaging.l1)
    if isinstance(c.driving, FiniteCycle):
        res = averaging.cesaro_from_sums(average_sums(c, w, f), tol, n_max or MET_N_MAX, norm)
    else:
        res = averaging.cesaro_from_iterates(_terms(c, w, fiber_values(c, f)), tol,
                                             n_max or STEP_N_MAX, norm)
    return res.limit, res.n_used, res.converged


def cesaro_state(c: LinearCocycle, w: int, f, n: int) -> CesaroState:
    if isinstance(c.driving, FiniteCycle):
        s = average_sums(c, w, f)(n)
    else:
        it = _terms(c, w, fiber_values(c, f))
        s = sum(next(it) for _ in range(n))
    return CesaroState(w, np.asarray(s, float), n)


@dataclass
class METReport:
    fibers: list[int]
    h: dict[int, np.ndarray]
    n_used: dict[int, int]
    converged: dict[int, bool]
    equivariance: dict[int, float]
    equivariance_tol: float
    bounded: bool
    notes: list[str] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(self.converged.values())

    @property
    def max_equivariance(self) -> float:
        vals = [v for v in self.equivariance.values() if np.isfinite(v)]
        return max(vals) if vals else float("nan")

    @property
    def status(self) -> str:
        if not self.all_converged:
            return "inconclusive"
        return "pass" if self.max_equivariance <= self.equivariance_tol else "fail"


def met_verify(c: NormedCocycle, f, tol: float = 1e-9, n_max: int | None = None,
               fibers: Sequence[int] | None = None, jobs: int = 1) -> METReport:
    """Averages on every fiber plus the equivariance ``P_w h_w = h_(s w)``.

    The residual is judged against ``tol + 2 sup||f|| / n``: at a finite
    ``n`` the averages are equivariant only up to that telescoping term.
    """
    if fibers is None:
        fibers = list(c.driving.points) if isinstance(c.driving, FiniteCycle) else list(range(8))
    fibers = list(fibers)
    run = lambda w: cesaro_iterate(c, w, f, tol, n_max)  # noqa: E731
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as pool:
            outs = list(pool.map(run, fibers))
    else:
        outs = [run(w) for w in fibers]
    h = {w: o[0] for w, o in zip(fibers, outs)}
    n_used = {w: o[1] for w, o in zip(fibers, outs)}
    conv = {w: o[2] for w, o in zip(fibers, outs)}
    eq = {}
    for w in fibers:
        nxt = c.driving.step(w)
        eq[w] = c.norm(c.matrix_at(w) @ h[w] - h[nxt]) if nxt in h else float("nan")
    fv = fiber_values(c, f)
    fmax = max(c.norm(fv(w)) for w in fibers)
    bounded = all(c.norm(h[w]) <= fmax * (1 + 1e-9) + 1e-12 for w in fibers)
    eq_tol = tol + 2.0 * fmax / min(n_used.values())
    notes = ["fiberwise weak precompactness holds by finite dimension"]
    if not isinstance(c.driving, FiniteCycle):
        notes.append(f"sampled window of fibers {fibers[0]}..{fibers[-1]}")
    return METReport(fibers, h, n_used, conv, eq, eq_tol, bounded, notes)


# --- lift-level identities --------------------------------------------------


def lift_table(c: LinearCocycle, table: Mapping[int, np.ndarray]) -> dict[int, np.ndarray]:
    """``(L f)(w) = P_(s^-1 w) f_(s^-1 w)`` on a finite driver."""
    cyc = c.driving
    return {w: c.matrix_at(cyc.step_inv(w)) @ np.asarray(table[cyc.step_inv(w)], float)
            for w in cyc.points}


def triple_norm(c: NormedCocycle, table: Mapping[int, np.ndarray]) -> float:
    """``sum_w P(w) ||f_w||`` with uniform weights on the cycle."""
    pts = list(c.driving.points)
    return sum(c.norm(np.asarray(table[w], float)) for w in pts) / len(pts)


def _average_table(c: LinearCocycle, table, n: int) -> dict[int, np.ndarray]:
    acc = {w: np.zeros(c.dim) for w in c.driving.points}
    cur = {w: np.asarray(v, float) for w, v in table.items()}
    for _ in range(n):
        for w in acc:
            acc[w] += cur[w]
        cur = lift_table(c, cur)
    return {w: v / n for w, v in acc.items()}


def telescoping_check(c: NormedCocycle, table: Mapping[int, np.ndarray],
                      ns: Sequence[int] = range(1, 65)) -> list[dict]:
    """``|||A^n f - A^n L f|||`` against ``2 |||f||| / n`` and ``A^n L = L A^n``.

    Runs one sweep with the two averages accumulated side by side.
    """
    f = {w: np.asarray(v, float) for w, v in table.items()}
    lf = lift_table(c, f)
    bound_base = 2.0 * triple_norm(c, f)
    pts = list(c.driving.points)
    acc_f = {w: np.zeros(c.dim) for w in pts}
    acc_lf = {w: np.zeros(c.dim) for w in pts}
    cur_f, cur_lf = dict(f), dict(lf)
    wanted = set(ns)
    out = []
    for n in range(1, max(wanted) + 1):
        for w in pts:
            acc_f[w] += cur_f[w]
            acc_lf[w] += cur_lf[w]
        cur_f, cur_lf = lift_table(c, cur_f), lift_table(c, cur_lf)
        if n in wanted:
            a_f = {w: acc_f[w] / n for w in pts}
            a_lf = {w: acc_lf[w] / n for w in pts}
            gap = triple_norm(c, {w: a_f[w] - a_lf[w] for w in pts})
            la = lift_table(c, a_f)
            comm = max(float(np.abs(a_lf[w] - la[w]).max()) for w in pts)
            out.append({"n": n, "gap": gap, "bound": bound_base / n,
                        "holds": gap <= bound_base / n + 1e-12, "commutator": comm})
    return out


def birkhoff_check(c: NormedCocycle, table: Mapping[int, np.ndarray], w: int, periods: int = 1
                   ) -> tuple[float, float]:
    """``(1/N) sum_(n<N) ||g_(s^-n w)||`` at ``N = periods * cycle length``,
    and the space average it must equal."""
    big_n = periods * c.driving.n
    time_avg = sum(c.norm(np.asarray(table[c.driving.shift(w, -k)], float))
                   for k in range(big_n)) / big_n
    return time_avg, triple_norm(c, table)


@dataclass
class CoboundaryFit:
    g: dict[int, np.ndarray]
    r: dict[int, np.ndarray]
    residual: float        # max |(L - I) g + r - (f - h)|
    r_norm: float          # |||r|||_1
    eps: float

    @property
    def achieved(self) -> bool:
        return self.r_norm < self.eps


def _flat_lift(c: LinearCocycle) -> np.ndarray:
    cyc = c.driving
    d = c.dim
    big = np.zeros((cyc.n * d, cyc.n * d))
    for w in cyc.points:
        v = cyc.step(w)
        big[v * d:(v + 1) * d, w * d:(w + 1) * d] = c.matrix_at(w)
    return big


def coboundary_fit(c: NormedCocycle, f, h: Mapping[int, np.ndarray], eps: float) -> CoboundaryFit:
    """Least-squares ``g`` with ``f - h = L g - g + r``; ``r`` is what is left.

    ``numpy.linalg.lstsq`` returns the minimum-norm solution, so a singular
    ``L - I`` (always the case when ``h != 0``) needs no special handling.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not isinstance(c.driving, FiniteCycle):
        raise TypeError("coboundary fit needs a finite driver")
    fv = fiber_values(c, f)
    pts = list(c.driving.points)
    d = c.dim
    rhs = np.concatenate([fv(w) - np.asarray(h[w], float) for w in pts])
    a = _flat_lift(c) - np.eye(len(rhs))
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    r = rhs - a @ sol
    g = {w: sol[w * d:(w + 1) * d] for w in pts}
    rt = {w: r[w * d:(w + 1) * d] for w in pts}
    resid = float(np.abs(a @ sol + r - rhs).max()) if len(rhs) else 0.0
    return CoboundaryFit(g, rt, resid, triple_norm(c, rt), eps)


def rotation(theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    return np.array([[ct, -st], [st, ct]])
