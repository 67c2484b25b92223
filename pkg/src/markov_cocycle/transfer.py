"""Random interval maps, Ulam matrices and fibered-system certificates.

Maps are finite lists of monotone branches on ``[0, 1)``. Two branch kinds
are supported: affine ``x -> a x + b`` and the left branch of the
Liverani-Saussol-Vaienti map ``x -> x (1 + 2^g x^g)``, which has an
indifferent fixed point at 0.

Ulam discretization on ``d`` equal cells gives the column-stochastic matrix
``M[j, i] = m(I_i & T^-1 I_j) / m(I_i)``. Affine branches are integrated
exactly; other branches use ``K`` midpoint samples per cell.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Density, MarkovCocycle, MarkovMatrix
from .driving import DrivingSystem

BISECT_TOL = 1e-13
_EPS = 1e-15


class MapError(ValueError):
    pass


class CylinderExplosion(RuntimeError):
    pass


@dataclass(frozen=True)
class AffineBranch:
    lo: float
    hi: float
    slope: float
    intercept: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise MapError(f"empty branch domain [{self.lo}, {self.hi})")
        if self.slope == 0:
            raise MapError("affine branch with zero slope is not monotone")

    affine = True

    @property
    def increasing(self) -> bool:
        return self.slope > 0

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), abs(self.slope))

    def inverse(self, y):
        return (np.asarray(y, dtype=float) - self.intercept) / self.slope

    def image(self) -> tuple[float, float]:
        a, b = float(self(self.lo)), float(self(self.hi))
        return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class LSVBranch:
    """``x -> x (1 + 2^g x^g)`` restricted to ``[lo, hi)``."""

    lo: float
    hi: float
    gamma: float

    def __post_init__(self):
        if not self.hi > self.lo >= 0:
            raise MapError(f"bad LSV branch domain [{self.lo}, {self.hi})")
        if self.gamma <= 0:
            raise MapError("LSV exponent must be positive")

    affine = False
    increasing = True

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        return x * (1.0 + 2.0 ** self.gamma * x ** self.gamma)

    def derivative(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        return 1.0 + (1.0 + self.gamma) * 2.0 ** self.gamma * x ** self.gamma

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        lo = np.full(y.shape, self.lo)
        hi = np.full(y.shape, self.hi)
        while np.any(hi - lo > BISECT_TOL):
            mid = 0.5 * (lo + hi)
            below = self(mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def image(self) -> tuple[float, float]:
        return float(self(self.lo)), float(self(self.hi))


Branch = AffineBranch | LSVBranch


@dataclass(frozen=True)
class PiecewiseMap:
    """Finitely many monotone branches whose domains partition ``[0, 1)``."""

    branches: tuple
    name: str = ""

    def __post_init__(self):
        br = tuple(sorted(self.branches, key=lambda b: b.lo))
        object.__setattr__(self, "branches", br)
        if not br:
            raise MapError("map needs at least one branch")
        if abs(br[0].lo) > 1e-12 or abs(br[-1].hi - 1.0) > 1e-12:
            raise MapError("branch domains must cover [0, 1)")
        for a, b in zip(br, br[1:]):
            if abs(a.hi - b.lo) > 1e-12:
                raise MapError(f"branch domains leave a gap or overlap at {a.hi}")
        for b in br:
            lo, hi = b.image()
            if lo < -1e-12 or hi > 1 + 1e-12:
                raise MapError(f"branch on [{b.lo}, {b.hi}) maps outside [0, 1]")

    @property
    def affine(self) -> bool:
        return all(b.affine for b in self.branches)

    def branch_index(self, x) -> np.ndarray:
        lows = np.array([b.lo for b in self.branches])
        return np.clip(np.searchsorted(lows, x, side="right") - 1, 0, len(lows) - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty_like(x)
        for k, b in enumerate(self.branches):
            sel = idx == k
            if np.any(sel):
                out[sel] = b(x[sel])
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty_like(x)
        for k, b in enumerate(self.branches):
            sel = idx == k
            if np.any(sel):
                out[sel] = b.derivative(x[sel])
        return out

    def preimage(self, lo: np.ndarray, hi: np.ndarray, tag: np.ndarray):
        """Preimage of the tagged intervals ``[lo, hi)`` as tagged intervals."""
        out_lo, out_hi, out_tag = [], [], []
        for b in self.branches:
            ilo, ihi = b.image()
            a = np.maximum(lo, ilo)
            c = np.minimum(hi, ihi)
            keep = c - a > _EPS
            if not np.any(keep):
                continue
            p, q = b.inverse(a[keep]), b.inverse(c[keep])
            out_lo.append(np.clip(np.minimum(p, q), b.lo, b.hi))
            out_hi.append(np.clip(np.maximum(p, q), b.lo, b.hi))
            out_tag.append(tag[keep])
        if not out_lo:
            empty = np.empty(0)
            return empty, empty, np.empty(0, dtype=int)
        return np.concatenate(out_lo), np.concatenate(out_hi), np.concatenate(out_tag)


def affine_full_branch(k: int, name: str = "") -> PiecewiseMap:
    """``x -> k x mod 1``."""
    return PiecewiseMap(tuple(AffineBranch(j / k, (j + 1) / k, float(k), -float(j))
                              for j in range(k)), name or f"times{k}")


def doubling() -> PiecewiseMap:
    return affine_full_branch(2, "doubling")


def tripling() -> PiecewiseMap:
    return affine_full_branch(3, "tripling")


def identity_map() -> PiecewiseMap:
    return PiecewiseMap((AffineBranch(0.0, 1.0, 1.0, 0.0),), "identity")


def lsv_map(gamma: float) -> PiecewiseMap:
    return PiecewiseMap((LSVBranch(0.0, 0.5, gamma), AffineBranch(0.5, 1.0, 2.0, -1.0)),
                        f"lsv{gamma:g}")


@dataclass(frozen=True)
class Partition:
    """``d`` equal cells ``[j/d, (j+1)/d)`` of ``[0, 1)``."""

    d: int

    def __post_init__(self):
        if self.d < 1:
            raise MapError(f"partition needs at least one cell, got {self.d}")

    @property
    def cell_weights(self) -> np.ndarray:
        return np.full(self.d, 1.0 / self.d)

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.d + 1) / self.d

    def cell_of(self, y) -> np.ndarray:
        return np.clip(np.floor(np.asarray(y) * self.d).astype(int), 0, self.d - 1)


@dataclass
class RandomMapFamily:
    """Table of interval maps indexed by environment label."""

    maps: Sequence[PiecewiseMap]
    driving: DrivingSystem

    def map_at(self, w: int) -> PiecewiseMap:
        return self.maps[self.driving.label(w)]

    def ulam_cocycle(self, p: Partition, subsamples: int = 64) -> MarkovCocycle:
        return MarkovCocycle([ulam_matrix(m, p, subsamples) for m in self.maps],
                             self.driving)


# --- Ulam discretization -----------------------------------------------------


def _exact_segment(col: np.ndarray, b: AffineBranch, x0: float, x1: float,
                   p: Partition, scale: float) -> None:
    """Add the image of ``[x0, x1)`` under affine ``b`` to ``col``, exactly."""
    y0, y1 = sorted((float(b(x0)), float(b(x1))))
    span = y1 - y0
    seg = (x1 - x0) * scale
    j0, j1 = p.cell_of(y0), min(p.cell_of(y1), p.d - 1)
    for j in range(int(j0), int(j1) + 1):
        ov = min(y1, (j + 1) / p.d) - max(y0, j / p.d)
        if ov > 0:
            col[j] += seg * ov / span


def ulam_matrix(tmap: PiecewiseMap, p: Partition, subsamples: int = 64) -> MarkovMatrix:
    """Ulam matrix of ``tmap`` on ``p`` in mass coordinates."""
    d = p.d
    out = np.zeros((d, d))
    k = int(subsamples)
    if k < 1:
        raise MapError("need at least one subsample per cell")
    offsets = (np.arange(k) + 0.5) / k
    for i in range(d):
        a, b = i / d, (i + 1) / d
        pieces = [br for br in tmap.branches if br.hi > a and br.lo < b]
        if all(br.affine for br in pieces):
            for br in pieces:
                _exact_segment(out[:, i], br, max(a, br.lo), min(b, br.hi), p, d)
        else:
            x = a + offsets / d
            np.add.at(out[:, i], p.cell_of(tmap(x)), 1.0 / k)
    # exact arithmetic is only exact up to rounding; renormalize the columns
    out /= out.sum(axis=0, keepdims=True)
    return MarkovMatrix(out)


def pf_duality_check(tmap: PiecewiseMap, p: Partition, f: Density, g,
                     subsamples: int = 64, matrix: MarkovMatrix | None = None) -> float:
    """``|<Ulam(T) f, g> - <f, g o T>|`` with ``g o T`` averaged on subsamples."""
    g = np.asarray(g, dtype=float)
    m = matrix if matrix is not None else ulam_matrix(tmap, p, subsamples)
    lhs = float((m.entries @ f.masses) @ g)
    offsets = (np.arange(subsamples) + 0.5) / subsamples
    x = (np.arange(p.d)[:, None] + offsets[None, :]) / p.d
    gt = g[p.cell_of(tmap(x.ravel()))].reshape(x.shape).mean(axis=1)
    rhs = float(f.masses @ gt)
    return abs(lhs - rhs)


# --- fibered-system certificate ---------------------------------------------


@dataclass
class Cylinder:
    lo: float
    hi: float
    img_lo: float
    img_hi: float
    chain: tuple  # branches in application order
    word: tuple

    @property
    def measure(self) -> float:
        return self.hi - self.lo

    @property
    def image_measure(self) -> float:
        return self.img_hi - self.img_lo


def _pull_back_point(chain, y: float) -> float:
    for br in reversed(chain):
        y = float(br.inverse(np.array([y]))[0])
    return y


def enumerate_cylinders(maps: Sequence[PiecewiseMap], limit: int = 10**6) -> list[Cylinder]:
    """Nonempty cylinders for the maps applied in the given order.

    A cylinder is the set of points whose orbit under ``maps[0]``, then
    ``maps[1]``, ... visits a prescribed branch of each map. Enumeration is
    depth first and prunes empty intersections.
    """
    out: list[Cylinder] = []

    def visit(lo, hi, ilo, ihi, chain, word, depth):
        if depth == len(maps):
            out.append(Cylinder(lo, hi, ilo, ihi, chain, word))
            if len(out) > limit:
                raise CylinderExplosion(f"more than {limit} cylinders")
            return
        for k, br in enumerate(maps[depth].branches):
            a, b = max(ilo, br.lo), min(ihi, br.hi)
            if b - a <= _EPS:
                continue
            ya, yb = sorted((float(br(a)), float(br(b))))
            if chain:
                p, q = _pull_back_point(chain, a), _pull_back_point(chain, b)
                clo, chi = min(p, q), max(p, q)
            else:
                clo, chi = a, b
            visit(clo, chi, ya, yb, chain + (br,), word + (k,), depth + 1)

    visit(0.0, 1.0, 0.0, 1.0, (), (), 0)
    return out


def _derivative_along(chain, x: np.ndarray) -> np.ndarray:
    der = np.ones_like(x)
    for br in chain:
        der = der * br.derivative(x)
        x = br(x)
    return der


def preimage_measure(maps: Sequence[PiecewiseMap], lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``m((T_last o ... o T_first)^-1 [lo_a, hi_a))`` for each interval ``a``.

    ``maps`` is in application order.
    """
    tag = np.arange(len(lo))
    a, b = np.asarray(lo, float), np.asarray(hi, float)
    for tm in reversed(maps):
        a, b, tag = tm.preimage(a, b, tag)
    return np.bincount(tag, weights=b - a, minlength=len(lo))


@dataclass
class DistortionReport:
    """Finite-depth certificate of the fibered-system conditions (1)-(4)."""

    fiber: int
    depth: int
    distortion: list[float]          # C_n, n = 1..depth
    min_image: list[float]           # c_n
    max_diameter: list[float]        # largest cylinder width at depth n
    cylinder_counts: list[int]
    lemma_violations: int
    lemma_checked: int
    deltas: dict[float, float] = field(default_factory=dict)
    ui_checks: dict[float, dict] = field(default_factory=dict)
    verdicts: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def C(self) -> float:
        return max(self.distortion)

    @property
    def c(self) -> float:
        return min(self.min_image)

    def delta(self, eps: float) -> float:
        return eps * self.c / self.C

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.verdicts.values())


def fibered_report(fam: RandomMapFamily, w: int, depth: int, *,
                   subsamples: int = 64, limit: int = 10**6,
                   diameter_threshold: float = 0.05,
                   distortion_bound: float = 50.0,
                   growth_tol: float = 1e-3,
                   epsilons: Sequence[float] = (0.1, 0.01),
                   ui_horizon: int | None = None) -> DistortionReport:
    """Check the fibered-system conditions along the past of fiber ``w``.

    For each ``n <= depth`` the cylinders ``X^w_(i_1..i_n)`` are built from
    the maps ``T_(s^-n w), ..., T_(s^-1 w)`` (application order), each step
    cut by the branch partition of the map applied at that step.

    Condition (2) is certified by the proxy "largest cylinder at the final
    depth is narrower than ``diameter_threshold``". Condition (3) fails when
    the distortion estimate exceeds ``distortion_bound`` or is still growing
    by more than ``growth_tol`` (relative) over the last two depths, since a
    bounded-distortion family saturates.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    labels = fam.driving.past_labels(w, depth)
    dist, cmin, diam, counts = [], [], [], []
    by_depth: list[list[Cylinder]] = []
    for n in range(1, depth + 1):
        maps = [fam.maps[lab] for lab in reversed(labels[:n])]
        cyls = enumerate_cylinders(maps, limit)
        by_depth.append(cyls)
        counts.append(len(cyls))
        worst, c_n, dmax = 1.0, math.inf, 0.0
        for cy in cyls:
            xs = np.linspace(cy.lo, cy.hi, subsamples + 1)
            der = _derivative_along(cy.chain, xs)
            worst = max(worst, float(der.max() / der.min()))
            c_n = min(c_n, cy.image_measure)
            dmax = max(dmax, cy.measure)
        dist.append(worst)
        cmin.append(c_n)
        diam.append(dmax)

    rep = DistortionReport(w, depth, dist, cmin, diam, counts, 0, 0)
    C = rep.C
    # bound on d(m o V)/dm from the lemma: C m(cylinder) / m(image)
    for cyls in by_depth:
        for cy in cyls:
            xs = np.linspace(cy.lo, cy.hi, subsamples + 1)
            sup_inv = float(1.0 / _derivative_along(cy.chain, xs).min())
            bound = C * cy.measure / cy.image_measure
            rep.lemma_checked += 1
            if sup_inv > bound * (1 + 1e-9):
                rep.lemma_violations += 1

    horizon = ui_horizon if ui_horizon is not None else depth
    all_cyls = [cy for cyls in by_depth for cy in cyls]
    lo = np.array([cy.lo for cy in all_cyls])
    hi = np.array([cy.hi for cy in all_cyls])
    meas = hi - lo
    past = fam.driving.past_labels(w, horizon)
    for eps in epsilons:
        dlt = rep.delta(eps)
        rep.deltas[eps] = dlt
        small = meas < dlt
        worst = 0.0
        if np.any(small):
            for p in range(1, horizon + 1):
                maps = [fam.maps[lab] for lab in reversed(past[:p])]
                worst = max(worst, float(preimage_measure(maps, lo[small], hi[small]).max()))
        rep.ui_checks[eps] = {"delta": dlt, "sets": int(small.sum()),
                              "max_mass": worst, "pass": worst < eps}

    rep.verdicts["partition"] = "pass"
    rep.verdicts["generator"] = "pass" if diam[-1] < diameter_threshold else "fail"
    growing = len(dist) >= 2 and dist[-1] > dist[-2] * (1 + growth_tol)
    rep.verdicts["distortion"] = "fail" if C > distortion_bound or growing else "pass"
    rep.verdicts["image"] = "pass" if rep.c > 0 else "fail"
    rep.verdicts["lemma"] = "pass" if rep.lemma_violations == 0 else "fail"
    rep.verdicts["uniform_integrability"] = (
        "pass" if all(v["pass"] for v in rep.ui_checks.values()) else "fail")
    rep.notes.append(
        f"generator condition proxy: max cylinder width {diam[-1]:.3g} at depth "
        f"{depth} vs threshold {diameter_threshold:g}")
    return rep


# --- map-family files --------------------------------------------------------
#
#   # comment
#   <label>: <map>
#   <map>    := doubling | tripling | identity | times <k> | lsv <gamma>
#             | <branch> ; <branch> ; ...
#   <branch> := affine <lo> <hi> <slope> <intercept>
#             | lsvleft <lo> <hi> <gamma>

_LINE = re.compile(r"^\s*(\d+)\s*:\s*(.+?)\s*$")


def parse_map(text: str) -> PiecewiseMap:
    words = text.split()
    head = words[0].lower()
    if head == "doubling" and len(words) == 1:
        return doubling()
    if head == "tripling" and len(words) == 1:
        return tripling()
    if head == "identity" and len(words) == 1:
        return identity_map()
    if head == "times" and len(words) == 2:
        return affine_full_branch(int(words[1]))
    if head == "lsv" and len(words) == 2:
        return lsv_map(float(words[1]))
    branches = []
    for part in text.split(";"):
        w = part.split()
        if not w:
            continue
        kind, args = w[0].lower(), [float(x) for x in w[1:]]
        if kind == "affine" and len(args) == 4:
            branches.append(AffineBranch(*args))
        elif kind == "lsvleft" and len(args) == 3:
            branches.append(LSVBranch(*args))
        else:
            raise MapError(f"cannot parse branch {part.strip()!r}")
    return PiecewiseMap(tuple(branches))


def read_map_family(path) -> list[PiecewiseMap]:
    """Read a map-family file; labels must be ``0..k-1`` in any order."""
    found = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            raise MapError(f"{path}:{lineno}: expected '<label>: <map>'")
        try:
            found[int(m.group(1))] = parse_map(m.group(2))
        except (MapError, ValueError) as exc:
            raise MapError(f"{path}:{lineno}: {exc}") from None
    if sorted(found) != list(range(len(found))):
        raise MapError(f"{path}: labels must be 0..{len(found) - 1}")
    return [found[k] for k in range(len(found))]
