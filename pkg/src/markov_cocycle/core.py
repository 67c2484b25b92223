"""Densities, finite-rank Markov operators and operator cocycles.

Everything lives in *mass coordinates*: a density ``f`` on a partition with
cell weights ``m(I_i)`` is stored as the vector of cell masses
``f_i * m(I_i)``. The L1 norm is then a plain absolute sum, Markov operators
are column-stochastic matrices acting on the left, and the duality pairing
is ``<f, g> = sum_i masses[i] * g[i]`` for an observable ``g`` given by its
cell values. Under this pairing the adjoint of ``M`` is ``M.T``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .driving import DrivingSystem, FiniteCycle

MASS_TOL = 1e-12


class DimensionError(ValueError):
    pass


class MissingFiberError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class Density:
    """Piecewise-constant probability density, stored as cell masses."""

    masses: np.ndarray
    cell_weights: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).copy()
        w = np.asarray(self.cell_weights, dtype=float).copy()
        if m.ndim != 1 or w.shape != m.shape:
            raise DimensionError(
                f"masses {m.shape} and weights {w.shape} must be equal 1-d")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError("cell weights must be positive and sum to 1")
        if np.any(m < -MASS_TOL):
            raise ValueError("density masses must be nonnegative")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"density masses sum to {m.sum()!r}, not 1")
        m.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "cell_weights", w)

    @classmethod
    def uniform(cls, d: int) -> "Density":
        w = np.full(d, 1.0 / d)
        return cls(w, w)

    @classmethod
    def from_values(cls, values, cell_weights) -> "Density":
        """Build from pointwise values (density height on each cell)."""
        w = np.asarray(cell_weights, dtype=float)
        return cls(np.asarray(values, dtype=float) * w, w)

    @property
    def values(self) -> np.ndarray:
        return self.masses / self.cell_weights

    @property
    def dim(self) -> int:
        return self.masses.shape[0]

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        return f"Density({np.array2string(self.masses, precision=6)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Density):
            return NotImplemented
        return (np.array_equal(self.masses, other.masses)
                and np.array_equal(self.cell_weights, other.cell_weights))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MarkovMatrix:
    """Column-stochastic matrix, i.e. a Markov operator on mass vectors."""

    entries: np.ndarray
    atol: float = field(default=MASS_TOL, repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"Markov matrix must be square, got {a.shape}")
        if np.any(a < 0):
            raise ValueError("Markov matrix has negative entries")
        cols = a.sum(axis=0)
        bad = np.abs(cols - 1.0) > self.atol
        if np.any(bad):
            j = int(np.argmax(bad))
            raise ValueError(f"column {j} sums to {cols[j]!r}, not 1")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @classmethod
    def identity(cls, d: int) -> "MarkovMatrix":
        return cls(np.eye(d))


def _matrix(m) -> np.ndarray:
    return m.entries if isinstance(m, MarkovMatrix) else np.asarray(m, dtype=float)


def _vector(f) -> np.ndarray:
    return f.masses if isinstance(f, Density) else np.asarray(f, dtype=float)


def apply(m, f):
    """``M f``. Returns a :class:`Density` when ``f`` is one."""
    a, v = _matrix(m), _vector(f)
    if a.shape[1] != v.shape[0]:
        raise DimensionError(f"matrix {a.shape} cannot act on length {v.shape[0]}")
    out = a @ v
    if isinstance(f, Density):
        return Density(np.clip(out, 0.0, None), f.cell_weights)
    return out


def adjoint_apply(m, g) -> np.ndarray:
    """Adjoint action on an observable (cell values): ``<Mf, g> = <f, M*g>``."""
    a, v = _matrix(m), np.asarray(g, dtype=float)
    if a.shape[0] != v.shape[0]:
        raise DimensionError(f"adjoint of {a.shape} cannot act on length {v.shape[0]}")
    return a.T @ v


def pairing(f, g) -> float:
    return float(np.dot(_vector(f), np.asarray(g, dtype=float)))


class LinearCocycle:
    """Operator cocycle over a driver, given by a table of generator matrices.

    ``label_of`` maps a point of Omega to a generator index and defaults to
    the driver's own labelling.
    """

    def __init__(self, generators: Sequence, driving: DrivingSystem,
                 label_of: Callable[[int], int] | None = None):
        mats = [_matrix(g) for g in generators]
        if not mats:
            raise ValueError("cocycle needs at least one generator")
        d = mats[0].shape[0]
        for k, a in enumerate(mats):
            if a.shape != (d, d):
                raise DimensionError(f"generator {k} has shape {a.shape}, expected {(d, d)}")
        self.matrices = tuple(mats)
        self.driving = driving
        self._label_of = label_of or driving.label
        self.dim = d

    def label_of(self, w: int) -> int:
        k = self._label_of(w)
        if not 0 <= k < len(self.matrices):
            raise IndexError(f"label {k} at point {w} has no generator")
        return k

    def matrix_at(self, w: int) -> np.ndarray:
        return self.matrices[self.label_of(w)]

    def is_constant(self) -> bool:
        """True if every label in use selects the same matrix."""
        first = self.matrices[0]
        return all(a is first or np.array_equal(a, first) for a in self.matrices[1:])

    @property
    def is_periodic(self) -> bool:
        return isinstance(self.driving, FiniteCycle)

    def pullback_products(self, w: int, n: int) -> list[np.ndarray]:
        """``[R_0, ..., R_n]`` with ``R_k = P_(s^-1 w) ... P_(s^-k w)``."""
        out = [np.eye(self.dim)]
        v = w
        for _ in range(n):
            v = self.driving.step_inv(v)
            out.append(out[-1] @ self.matrix_at(v))
        return out


class MarkovCocycle(LinearCocycle):
    """Linear cocycle whose generators are all Markov matrices."""

    def __init__(self, generators: Sequence, driving: DrivingSystem,
                 label_of: Callable[[int], int] | None = None):
        gens = [g if isinstance(g, MarkovMatrix) else MarkovMatrix(g) for g in generators]
        super().__init__(gens, driving, label_of)
        self.generators = tuple(gens)

    def generator_at(self, w: int) -> MarkovMatrix:
        return self.generators[self.label_of(w)]


class RandomDensity(Mapping):
    """Table ``w -> Density`` over a finite set of fibers."""

    def __init__(self, fibers: Mapping[int, Density]):
        self._fibers = {int(k): v for k, v in fibers.items()}
        for k, v in self._fibers.items():
            if not isinstance(v, Density):
                raise TypeError(f"fiber {k} is not a Density")

    def __getitem__(self, w: int) -> Density:
        try:
            return self._fibers[int(w)]
        except KeyError:
            raise MissingFiberError(f"no density for fiber {w}") from None

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._fibers))

    def __len__(self) -> int:
        return len(self._fibers)

    def __repr__(self) -> str:
        return f"RandomDensity({dict(self._fibers)!r})"


def compose_forward(c: LinearCocycle, w: int, n: int, f):
    """``P^(n)_w f = P_(s^(n-1) w) ... P_w f``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    v = _vector(f)
    if v.shape[0] != c.dim:
        raise DimensionError(f"cocycle dim {c.dim} vs vector length {v.shape[0]}")
    for lab in c.driving.future_labels(w, n):
        v = c.matrices[lab] @ v
    return _rewrap(v, f)


def compose_pullback(c: LinearCocycle, w: int, n: int, f):
    """``P^(n)_(s^-n w) f``: the last ``n`` operators ending at fiber ``w``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    v = _vector(f)
    if v.shape[0] != c.dim:
        raise DimensionError(f"cocycle dim {c.dim} vs vector length {v.shape[0]}")
    for lab in reversed(c.driving.past_labels(w, n)):
        v = c.matrices[lab] @ v
    return _rewrap(v, f)


def _rewrap(v: np.ndarray, like):
    if isinstance(like, Density):
        return Density(np.clip(v, 0.0, None), like.cell_weights)
    return v


def equivariance_residual(c: LinearCocycle, h: Mapping[int, object],
                          fibers: Sequence[int] | None = None) -> float:
    """``max_w ||P_w h_w - h_(s w)||_1`` over the fiber table.

    For a :class:`FiniteCycle` driver every fiber must be present. For other
    drivers the maximum runs over fibers ``w`` with ``s w`` also in the table.
    """
    if fibers is None:
        if isinstance(c.driving, FiniteCycle):
            fibers = list(c.driving.points)
        else:
            fibers = [w for w in h if c.driving.step(w) in h]
            if not fibers:
                raise MissingFiberError("no fiber pair (w, s w) in the table")
    worst = 0.0
    for w in fibers:
        if w not in h:
            raise MissingFiberError(f"no density for fiber {w}")
        nxt = c.driving.step(w)
        if nxt not in h:
            raise MissingFiberError(f"no density for fiber {nxt}")
        r = c.matrix_at(w) @ _vector(h[w]) - _vector(h[nxt])
        worst = max(worst, float(np.abs(r).sum()))
    return worst


# --- CSV import / export -------------------------------------------------------
#
# Matrix:    "dim,<d>" then d rows of d values (row-major).
# Density:   "dim,<d>" then one row of masses, optionally a row of cell weights.
# Table:     "dim,<d>,count,<k>" then k blocks of d rows; block l is generator l.


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_rows(path) -> tuple[list[str], list[list[float]]]:
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [x.strip() for x in rows[0]]
    body = []
    for i, r in enumerate(rows[1:], start=2):
        try:
            body.append([float(x) for x in r])
        except ValueError as exc:
            raise ValueError(f"{path}: row {i}: {exc}") from None
    return header, body


def _dim_from_header(header, path) -> int:
    if len(header) < 2 or header[0] != "dim":
        raise ValueError(f"{path}: header must start with 'dim,<d>'")
    return int(header[1])


def write_matrix_csv(path, m) -> None:
    a = _matrix(m)
    lines = [f"dim,{a.shape[0]}"]
    lines += [",".join(_fmt(x) for x in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> MarkovMatrix:
    header, body = _read_rows(path)
    d = _dim_from_header(header, path)
    if len(body) != d or any(len(r) != d for r in body):
        raise ValueError(f"{path}: expected {d} rows of {d} values")
    return MarkovMatrix(np.array(body))


def write_density_csv(path, f: Density) -> None:
    lines = [f"dim,{f.dim}", ",".join(_fmt(x) for x in f.masses),
             ",".join(_fmt(x) for x in f.cell_weights)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_density_csv(path) -> Density:
    header, body = _read_rows(path)
    d = _dim_from_header(header, path)
    if not 1 <= len(body) <= 2 or any(len(r) != d for r in body):
        raise ValueError(f"{path}: expected 1 or 2 rows of {d} values")
    w = body[1] if len(body) == 2 else [1.0 / d] * d
    return Density(np.array(body[0]), np.array(w))


def write_generator_table(path, generators: Sequence) -> None:
    mats = [_matrix(g) for g in generators]
    d = mats[0].shape[0]
    lines = [f"dim,{d},count,{len(mats)}"]
    for a in mats:
        lines += [",".join(_fmt(x) for x in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


def read_generator_table(path, markov: bool = True) -> list:
    """Generators as :class:`MarkovMatrix` (or plain arrays with ``markov=False``)."""
    header, body = _read_rows(path)
    d = _dim_from_header(header, path)
    k = int(header[3]) if len(header) >= 4 and header[2] == "count" else 1
    if len(body) != k * d or any(len(r) != d for r in body):
        raise ValueError(f"{path}: expected {k} blocks of {d}x{d} values")
    arr = np.array(body)
    wrap = MarkovMatrix if markov else np.array
    return [wrap(arr[i * d:(i + 1) * d]) for i in range(k)]
