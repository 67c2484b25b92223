"""The lift operator on the flattened product space.

For a cocycle over ``FiniteCycle(N)`` a random density ``(f_w)`` is flattened
to one mass vector of length ``N d`` by ``flat[w d + i] = P(w) f_w[i]``. The
lift ``(Lf)(w) = P_(s^-1 w) f_(s^-1 w)`` then becomes a block matrix whose
only nonzero block in block-column ``w`` is ``P_w``, placed in block-row
``s w``.

Also here: the Ulam matrix of the skew product ``(w, x) -> (s w, T_w x)``
built directly on the product partition, and the lift-side checks of the
existence criteria (adjoint support sweep, mean ergodicity, trace bounds).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from . import averaging
from .core import (Density, LinearCocycle, MissingFiberError, equivariance_residual,
                   write_matrix_csv)
from .driving import FiniteCycle
from .invariant import (FAIL, INCONCLUSIVE, PASS, PullbackTrace, Verdict,
                        precompactness_diagnostics)
from .transfer import Partition, RandomMapFamily, ulam_matrix

SWEEP_TOL = 1e-12
CLOSED_FORM_MAX_FLAT = 256


class UnsupportedDriver(TypeError):
    """The lift needs a finite driver."""


def _require_cycle(driving) -> FiniteCycle:
    if not isinstance(driving, FiniteCycle):
        raise UnsupportedDriver(
            f"lift needs a FiniteCycle driver, got {type(driving).__name__}")
    return driving


@dataclass(frozen=True)
class FlatIndex:
    """``(fiber, cell) <-> fiber * d + cell`` with weights ``P(w) m(I_i)``."""

    n_fibers: int
    d: int

    @property
    def size(self) -> int:
        return self.n_fibers * self.d

    def flat(self, w: int, i: int) -> int:
        if not (0 <= w < self.n_fibers and 0 <= i < self.d):
            raise IndexError(f"({w}, {i}) outside {self.n_fibers} x {self.d}")
        return w * self.d + i

    def unflat(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.size:
            raise IndexError(k)
        return divmod(k, self.d)

    @property
    def fiber_weights(self) -> np.ndarray:
        return np.full(self.n_fibers, 1.0 / self.n_fibers)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def block(self, w: int) -> slice:
        return slice(w * self.d, (w + 1) * self.d)


def _fiber_masses(x) -> np.ndarray:
    return x.masses if isinstance(x, Density) else np.asarray(x, dtype=float)


def iota(table: Mapping[int, object], index: FlatIndex) -> np.ndarray:
    """Flatten a per-fiber table of masses, weighting fiber ``w`` by ``P(w)``."""
    out = np.empty(index.size)
    pw = index.fiber_weights
    for w in range(index.n_fibers):
        if w not in table:
            raise MissingFiberError(w)
        v = _fiber_masses(table[w])
        if v.shape != (index.d,):
            raise ValueError(f"fiber {w} has shape {v.shape}, expected ({index.d},)")
        out[index.block(w)] = pw[w] * v
    return out


def iota_inv(flat: np.ndarray, index: FlatIndex) -> dict[int, np.ndarray]:
    flat = np.asarray(flat, dtype=float)
    if flat.shape[0] != index.size:
        raise ValueError(f"flat vector has length {flat.shape[0]}, expected {index.size}")
    pw = index.fiber_weights
    return {w: flat[index.block(w)] / pw[w] for w in range(index.n_fibers)}


def global_norm(table: Mapping[int, object], index: FlatIndex) -> float:
    """``sum_w P(w) ||f_w||_1``."""
    pw = index.fiber_weights
    return float(sum(pw[w] * np.abs(_fiber_masses(table[w])).sum()
                     for w in range(index.n_fibers)))


def lift_fiberwise(c: LinearCocycle, table: Mapping[int, object]) -> dict[int, np.ndarray]:
    """``(Lf)(w) = P_(s^-1 w) f_(s^-1 w)`` evaluated fiber by fiber."""
    cyc = _require_cycle(c.driving)
    out = {}
    for w in cyc.points:
        u = cyc.step_inv(w)
        if u not in table:
            raise MissingFiberError(u)
        out[w] = c.matrix_at(u) @ _fiber_masses(table[u])
    return out


@dataclass
class LiftMatrix:
    entries: np.ndarray
    index: FlatIndex
    cocycle: LinearCocycle | None = None

    @property
    def dim(self) -> int:
        return self.index.size

    def block(self, row: int, col: int) -> np.ndarray:
        return self.entries[self.index.block(row), self.index.block(col)]

    def column_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    def __matmul__(self, x):
        return self.entries @ x

    def operator(self):
        """Sparse form when that pays off."""
        if self.dim >= 256:
            return sp.csr_matrix(self.entries)
        return self.entries


def build_lift(c: LinearCocycle) -> LiftMatrix:
    cyc = _require_cycle(c.driving)
    index = FlatIndex(cyc.n, c.dim)
    big = np.zeros((index.size, index.size))
    for w in cyc.points:
        big[index.block(cyc.step(w)), index.block(w)] = c.matrix_at(w)
    return LiftMatrix(big, index, c)


def write_lift_csv(path, lift: LiftMatrix) -> Path:
    """Matrix CSV plus a ``.blocks.txt`` sidecar naming the nonzero blocks."""
    path = Path(path)
    write_matrix_csv(path, lift.entries)
    side = path.with_suffix(".blocks.txt")
    lines = [f"fibers={lift.index.n_fibers} cells={lift.index.d}",
             "row_fiber,col_fiber,row_start,col_start,label"]
    c = lift.cocycle
    for w in range(lift.index.n_fibers):
        for v in range(lift.index.n_fibers):
            if np.any(lift.block(v, w)):
                lab = c.label_of(w) if c is not None else ""
                lines.append(f"{v},{w},{v * lift.index.d},{w * lift.index.d},{lab}")
    side.write_text("\n".join(lines) + "\n")
    return side


# --- skew product ---------------------------------------------------------


def _cell_overlaps(lo: np.ndarray, hi: np.ndarray, d: int) -> np.ndarray:
    """``m([lo_a, hi_a) ∩ I_i)`` as an array of shape (intervals, d)."""
    edges = np.arange(d + 1) / d
    left = np.maximum(lo[:, None], edges[None, :-1])
    right = np.minimum(hi[:, None], edges[None, 1:])
    return np.clip(right - left, 0.0, None)


def skew_ulam_matrix(fam: RandomMapFamily, p: Partition) -> np.ndarray:
    """Ulam matrix of the skew product on the cells ``{w} x I_j``.

    Entry ``((v, j), (w, i))`` is ``(P x m)({w} x I_i ∩ Skew^-1({v} x I_j))``
    divided by ``(P x m)({w} x I_i)``. Preimages are computed branch by branch
    and intersected with the source cells; no per-fiber Ulam matrix is used.
    """
    cyc = _require_cycle(fam.driving)
    d = p.d
    index = FlatIndex(cyc.n, d)
    big = np.zeros((index.size, index.size))
    edges = p.edges
    pw = index.fiber_weights
    for v in cyc.points:
        w = cyc.step_inv(v)                   # only {w} x X lands in fiber v
        a, b, tag = fam.map_at(w).preimage(edges[:-1].copy(), edges[1:].copy(), np.arange(d))
        ov = _cell_overlaps(a, b, d)          # (pieces, source cells)
        mass = np.zeros((d, d))               # [target j, source i]
        np.add.at(mass, tag, ov)
        src = pw[w] * p.cell_weights          # measure of each source cell
        big[index.block(v), index.block(w)] = pw[w] * mass / src[None, :]
    return big


def skew_ulam_equivalence(fam: RandomMapFamily, p: Partition, subsamples: int = 64) -> float:
    """Max entrywise gap between the skew-product Ulam matrix and the lift."""
    direct = skew_ulam_matrix(fam, p)
    lifted = build_lift(fam.ulam_cocycle(p, subsamples)).entries
    return float(np.abs(direct - lifted).max())


# --- lift-side existence checks -------------------------------------------


@dataclass
class LiftReport:
    lift: LiftMatrix
    fixed_point: np.ndarray
    n_used: int
    converged: bool
    delta: float
    fixed_residual: float
    fiber_masses: np.ndarray
    equivariance: float
    sweep: dict
    mean_ergodic: averaging.CesaroResult | None
    trace_diagnostics: object
    condition1: Verdict
    condition3: Verdict
    condition4: Verdict
    notes: list[str] = field(default_factory=list)

    def fiber_density(self, w: int, n_fixed: int | None = None) -> np.ndarray:
        idx = self.lift.index
        if n_fixed is None:
            flat = self.fixed_point
        else:
            flat = _lift_sums(self.lift)(n_fixed) / n_fixed
        return flat[idx.block(w)] / idx.fiber_weights[w]


def _lift_sums(lift: LiftMatrix, seed: np.ndarray | None = None):
    seed = lift.index.weights if seed is None else seed
    return averaging.matrix_power_sums(lift.entries, seed, stochastic=True)


def _lift_iterates(lift: LiftMatrix, seed: np.ndarray):
    op = lift.operator()
    x = seed.copy()
    while True:
        yield x
        x = op @ x


def _max_col(x: np.ndarray) -> float:
    return float(np.abs(x).sum(axis=0).max())


def adjoint_sweep(lift: LiftMatrix, support: np.ndarray, tol: float = 1e-9,
                  horizon: int = 4096) -> dict:
    """Iterate ``(L^*)^n 1_S`` and test monotone convergence to ``1``."""
    op = lift.operator().T
    y = support.astype(float)
    mono_gap = 0.0
    n = 0
    history = [float(y.min())]
    while n < horizon and 1.0 - y.min() >= tol:
        nxt = op @ y
        mono_gap = max(mono_gap, float((y - nxt).max()))
        y = nxt
        n += 1
        history.append(float(y.min()))
    return {"steps": n, "monotone": mono_gap <= SWEEP_TOL, "monotone_gap": mono_gap,
            "limit_gap": float(1.0 - y.min()), "converged": bool(1.0 - y.min() < tol),
            "trivial": bool(support.all()), "history": history}


def lift_consistency_report(lift: LiftMatrix, tol: float = 1e-9, n_max: int | None = None,
                            trace_horizon: int = 256, support_tol: float | None = None,
                            sweep_horizon: int = 4096) -> LiftReport:
    """Fixed point, mean ergodicity, support sweep and trace bounds of the lift."""
    idx = lift.index
    seed = idx.weights
    closed = lift.dim <= CLOSED_FORM_MAX_FLAT
    if closed:
        res = averaging.cesaro_from_sums(_lift_sums(lift, seed), tol, n_max or 2**50)
    else:
        res = averaging.cesaro_from_iterates(_lift_iterates(lift, seed), tol, n_max or 2**20)
    h = res.limit
    notes = []
    fixed_res = float(np.abs(lift.operator() @ h - h).sum())
    table = iota_inv(h, idx)
    fiber_mass = np.array([table[w].sum() for w in range(idx.n_fibers)])
    eq = float("nan")
    if lift.cocycle is not None:
        eq = equivariance_residual(lift.cocycle, table)

    # (4): averages converge for every basis seed at once
    mean_erg = None
    if closed:
        mean_erg = averaging.cesaro_from_sums(
            averaging.matrix_power_sums(lift.entries, np.eye(lift.dim), stochastic=True), tol,
            n_max or 2**50, norm=_max_col)
        ok4 = mean_erg.converged
        cond4 = Verdict(PASS if ok4 else INCONCLUSIVE, mean_erg.delta, mean_erg.n_used,
                        "Cesàro averages of L^n converge on every basis seed")
    else:
        cond4 = Verdict(PASS if res.converged else INCONCLUSIVE, res.delta, res.n_used,
                        "Cesàro averages converge from the flat uniform seed")

    # (1): adjoint sweep from the support of h
    thr = support_tol if support_tol is not None else max(tol, 1e-12)
    # masses within a few tol of zero are Cesàro leftovers, not support
    supp = h > 10.0 * thr
    sweep = adjoint_sweep(lift, supp, tol, sweep_horizon)
    fibers_ok = bool(np.all(np.abs(fiber_mass - 1.0) <= max(tol, 1e-12) * 10))
    eq_ok = not (eq > tol + 2.0 / res.n_used)
    if not res.converged:
        cond1 = Verdict(INCONCLUSIVE, res.delta, res.n_used, "fixed point not certified")
    elif not (fibers_ok and eq_ok):
        cond1 = Verdict(FAIL, eq, res.n_used,
                        f"fixed point is not a random density: fiber masses {fiber_mass}, "
                        f"equivariance {eq:.2e}")
    elif sweep["trivial"]:
        cond1 = Verdict(PASS, 0.0, 0, "trivially satisfied: h > 0 everywhere, L*1 = 1")
    elif not sweep["monotone"]:
        cond1 = Verdict(FAIL, sweep["monotone_gap"], sweep["steps"], "sweep not monotone")
    elif sweep["converged"]:
        cond1 = Verdict(PASS, sweep["limit_gap"], sweep["steps"], "monotone sweep reaches 1")
    else:
        cond1 = Verdict(INCONCLUSIVE, sweep["limit_gap"], sweep["steps"],
                        "sweep still below 1 at horizon")

    # (3): the trace L^n 1 is bounded on the flat grid
    steps, rows = [], []
    for n, x in enumerate(_lift_iterates(lift, seed)):
        steps.append(n)
        rows.append(np.array(x))
        if n >= trace_horizon:
            break
    tr = PullbackTrace(-1, np.array(steps), np.array(rows), idx.weights)
    diag = precompactness_diagnostics(tr)
    cond3 = Verdict(PASS if np.isfinite(diag.dominating_norm) else FAIL, diag.dominating_norm,
                    trace_horizon, "bounded lift trace (vacuous at fixed resolution)")
    if res.converged and fixed_res > tol + 2.0 / res.n_used:
        notes.append(f"L h - h residual {fixed_res:.2e} above tolerance")
    return LiftReport(lift, h, res.n_used, res.converged, res.delta, fixed_res, fiber_mass, eq,
                      sweep, mean_erg, diag, cond1, cond3, cond4, notes)


def ulam_lift_from_family(fam: RandomMapFamily, p: Partition, subsamples: int = 64) -> LiftMatrix:
    return build_lift(fam.ulam_cocycle(p, subsamples))


__all__ = ["FlatIndex", "LiftMatrix", "LiftReport", "UnsupportedDriver", "adjoint_sweep",
           "build_lift", "global_norm", "iota", "iota_inv", "lift_consistency_report",
           "lift_fiberwise", "skew_ulam_equivalence", "skew_ulam_matrix", "ulam_lift_from_family",
           "ulam_matrix", "write_lift_csv"]
