"""Invertible ergodic driving systems.

Two drivers are provided:

* :class:`FiniteCycle` -- the rotation ``w -> w + 1 mod N`` on ``{0..N-1}``
  with uniform weights. Exactly invertible and ergodic.
* :class:`SampledBernoulliPath` -- one two-sided i.i.d. label sequence,
  generated lazily from a seed. Points of Omega are integer time offsets on
  that path and the driver acts as the left shift ``t -> t + 1``.

Both expose environment labels, which index a cocycle's generator table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_BLOCK = 1024


class DrivingSystem:
    """Common interface of the drivers; see the concrete classes."""

    def step(self, w: int) -> int:
        raise NotImplementedError

    def step_inv(self, w: int) -> int:
        raise NotImplementedError

    def label(self, w: int) -> int:
        raise NotImplementedError

    @property
    def alphabet_size(self) -> int:
        raise NotImplementedError

    def past_labels(self, w: int, n: int) -> list[int]:
        """Labels at ``sigma^-1 w, ..., sigma^-n w`` (most recent first)."""
        if n < 0:
            raise ValueError(f"n must be nonnegative, got {n}")
        out = []
        for _ in range(n):
            w = self.step_inv(w)
            out.append(self.label(w))
        return out

    def future_labels(self, w: int, n: int) -> list[int]:
        """Labels at ``w, sigma w, ..., sigma^(n-1) w``."""
        if n < 0:
            raise ValueError(f"n must be nonnegative, got {n}")
        out = []
        for _ in range(n):
            out.append(self.label(w))
            w = self.step(w)
        return out

    def shift(self, w: int, k: int) -> int:
        """``sigma^k w`` for any integer ``k``."""
        for _ in range(abs(k)):
            w = self.step(w) if k > 0 else self.step_inv(w)
        return w


@dataclass(frozen=True)
class FiniteCycle(DrivingSystem):
    """Cyclic rotation on ``Z_N`` with uniform probability.

    ``labels`` optionally assigns an environment label to each point; by
    default point ``w`` carries label ``w``.
    """

    n: int
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"cycle length must be positive, got {self.n}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
            if len(self.labels) != self.n:
                raise ValueError(
                    f"expected {self.n} labels, got {len(self.labels)}")
            if min(self.labels) < 0:
                raise ValueError("labels must be nonnegative")

    def _check(self, w: int) -> int:
        w = int(w)
        if not 0 <= w < self.n:
            raise IndexError(f"point {w} outside Z_{self.n}")
        return w

    def step(self, w: int) -> int:
        return (self._check(w) + 1) % self.n

    def step_inv(self, w: int) -> int:
        return (self._check(w) - 1) % self.n

    def label(self, w: int) -> int:
        w = self._check(w)
        return w if self.labels is None else self.labels[w]

    @property
    def alphabet_size(self) -> int:
        return self.n if self.labels is None else max(self.labels) + 1

    @property
    def points(self) -> range:
        return range(self.n)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def shift(self, w: int, k: int) -> int:
        return (self._check(w) + k) % self.n


@dataclass(frozen=True)
class SampledBernoulliPath(DrivingSystem):
    """A single seeded sample of a two-sided Bernoulli shift.

    The label at time ``t`` depends only on ``(seed, t)``: labels are drawn in
    blocks of 1024 from a generator seeded with the seed and the block index,
    so any window can be queried in any order.
    """

    alphabet: int
    probabilities: tuple[float, ...]
    seed: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False,
                         compare=False, hash=False)

    def __post_init__(self):
        p = tuple(float(x) for x in self.probabilities)
        object.__setattr__(self, "probabilities", p)
        if self.alphabet < 1:
            raise ValueError("alphabet size must be positive")
        if len(p) != self.alphabet:
            raise ValueError(
                f"need {self.alphabet} probabilities, got {len(p)}")
        if min(p) < 0 or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError(f"probabilities {p} are not a simplex vector")

    def _block(self, b: int) -> np.ndarray:
        blk = self._cache.get(b)
        if blk is None:
            # zigzag keeps the entropy words nonnegative for negative blocks
            zz = 2 * b if b >= 0 else -2 * b - 1
            rng = np.random.default_rng([self.seed & (2**64 - 1), zz])
            blk = rng.choice(self.alphabet, size=_BLOCK, p=self.probabilities)
            self._cache[b] = blk
        return blk

    def step(self, w: int) -> int:
        return int(w) + 1

    def step_inv(self, w: int) -> int:
        return int(w) - 1

    def shift(self, w: int, k: int) -> int:
        return int(w) + k

    def label(self, w: int) -> int:
        b, off = divmod(int(w), _BLOCK)
        return int(self._block(b)[off])

    def window(self, start: int, stop: int) -> np.ndarray:
        """Labels at times ``start, ..., stop - 1``."""
        return np.array([self.label(t) for t in range(start, stop)], dtype=int)

    def past_labels(self, w: int, n: int) -> list[int]:
        if n < 0:
            raise ValueError(f"n must be nonnegative, got {n}")
        return [self.label(w - k) for k in range(1, n + 1)]

    @property
    def alphabet_size(self) -> int:
        return self.alphabet


def make_driving(kind: str, *, n: int | None = None,
                 alphabet: int | None = None,
                 probs: Sequence[float] | None = None, seed: int = 0,
                 labels: Sequence[int] | None = None) -> DrivingSystem:
    """Build a driver from the ``driving.*`` config keys."""
    if kind == "cycle":
        if n is None:
            raise ValueError("driving.n is required for kind=cycle")
        return FiniteCycle(int(n), tuple(labels) if labels is not None else None)
    if kind == "bernoulli":
        if alphabet is None:
            alphabet = len(probs) if probs is not None else None
        if alphabet is None:
            raise ValueError("driving.alphabet is required for kind=bernoulli")
        if probs is None:
            probs = [1.0 / alphabet] * alphabet
        return SampledBernoulliPath(int(alphabet), tuple(probs), int(seed))
    raise ValueError(f"unknown driving kind {kind!r}")
