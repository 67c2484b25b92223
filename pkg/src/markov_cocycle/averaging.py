"""Cesàro averaging with a gap-based convergence certificate.

A sequence ``x_0, x_1, ...`` is averaged as ``A_n = S_n / n`` with
``S_n = x_0 + ... + x_(n-1)``. Convergence is declared at the first checkpoint
``n`` where ``||A_n - A_(n-g)|| < tol`` for the gap ``g = ceil(n / 4)``.

Checkpoints are ``n = 2, 4, 8, ...``; the comparison points are then
``1, 3, 6, 12, ...``. Two sources of partial sums are supported:

* :func:`cesaro_from_iterates` consumes the sequence term by term;
* :func:`cesaro_from_sums` takes a closure returning ``S_n`` for arbitrary
  ``n``. Periodic products admit such a closure by binary powering
  (:func:`periodic_partial_sums`), which makes horizons like ``2**40``
  affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np


def gap(n: int) -> int:
    return -(-n // 4)


def checkpoints(n_max: int) -> Iterator[int]:
    n = 2
    while n <= n_max:
        yield n
        n *= 2


def l1(x: np.ndarray) -> float:
    return float(np.abs(x).sum())


@dataclass
class CesaroResult:
    """Outcome of a Cesàro run; ``limit`` is the last average computed."""

    limit: np.ndarray
    n_used: int
    converged: bool
    delta: float
    history: list[tuple[int, float]] = field(default_factory=list)


def cesaro_from_sums(partial_sum: Callable[[int], np.ndarray], tol: float,
                     n_max: int, norm: Callable[[np.ndarray], float] = l1,
                     ) -> CesaroResult:
    """Run the gap test using exact partial sums ``S_n = partial_sum(n)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n_max < 2:
        s = partial_sum(1)
        return CesaroResult(np.asarray(s, float), 1, False, math.inf)
    history = []
    avg, n, delta = None, 1, math.inf
    for n in checkpoints(n_max):
        avg = partial_sum(n) / n
        prev = partial_sum(n - gap(n)) / (n - gap(n))
        delta = norm(avg - prev)
        history.append((n, delta))
        if delta < tol:
            return CesaroResult(avg, n, True, delta, history)
    return CesaroResult(avg, n, False, delta, history)


def cesaro_from_iterates(terms: Iterable[np.ndarray], tol: float, n_max: int,
                         norm: Callable[[np.ndarray], float] = l1,
                         ) -> CesaroResult:
    """Run the gap test on a term-by-term sequence.

    Only the partial sums needed by the schedule are kept, so memory stays
    ``O(log n_max)`` vectors.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    wanted = set()
    for n in checkpoints(n_max):
        wanted.update((n, n - gap(n)))
    stored: dict[int, np.ndarray] = {}
    history = []
    running = None
    avg, delta, k = None, math.inf, 0
    for k, x in enumerate(terms, start=1):
        running = np.array(x, dtype=float) if running is None else running + x
        if k in wanted:
            stored[k] = running.copy()
        if k >= 2 and k & (k - 1) == 0:
            avg = running / k
            m = k - gap(k)
            delta = norm(avg - stored[m] / m)
            history.append((k, delta))
            if delta < tol:
                return CesaroResult(avg, k, True, delta, history)
        if k >= n_max:
            break
    if avg is None:
        avg = running / max(k, 1)
    return CesaroResult(avg, k, False, delta, history)


def _renorm(a: np.ndarray, total: float, axis: int | None) -> np.ndarray:
    if axis is None:
        return a
    s = a.sum(axis=axis, keepdims=True)
    return a * (total / np.where(s == 0, 1.0, s))


def power_and_geometric(q: np.ndarray, m: int, stochastic: int | None = None
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Q^m, I + Q + ... + Q^(m-1))`` by binary powering.

    ``stochastic`` names the axis along which ``Q`` sums to one (0 for
    column-stochastic, 1 for its transpose). Powers and sums are then
    renormalized after every product; without this, rounding drift in the
    unit eigenvalue compounds like ``(1 + eps)^m`` and ruins horizons near
    ``2**40``.
    """
    d = q.shape[0]
    ax = stochastic
    eye = np.eye(d)
    # (power, geometric sum) for the prefix of bits consumed so far
    pw, gs = eye.copy(), np.zeros((d, d))
    # (power, geometric sum) for the current bit weight 2^j
    bp, bg = q.copy(), eye.copy()
    done, width = 0, 1
    while m:
        if m & 1:
            done += width
            gs = _renorm(gs + pw @ bg, done, ax)
            pw = _renorm(pw @ bp, 1.0, ax)
        m >>= 1
        if m:
            width *= 2
            bg = _renorm(bg + bp @ bg, width, ax)
            bp = _renorm(bp @ bp, 1.0, ax)
    return pw, gs


def periodic_partial_sums(products: Sequence[np.ndarray], seeds: Sequence[np.ndarray],
                          stochastic: bool = False) -> Callable[[int], np.ndarray]:
    """Partial sums of ``x_k = R_k v_(k mod N)`` for a periodic product.

    ``products`` is ``[R_0, ..., R_N]`` with ``R_0 = I`` and the periodicity
    ``R_(qN + r) = R_N^q R_r``; ``seeds`` is ``[v_0, ..., v_(N-1)]``.
    Returns a closure computing ``S_n`` exactly in ``O(d^3 log n)``.
    """
    period = len(seeds)
    if len(products) != period + 1:
        raise ValueError("need N + 1 products for N seeds")
    mono = products[-1]
    terms = [products[r] @ seeds[r] for r in range(period)]
    prefix = [np.zeros_like(terms[0])]
    for t in terms:
        prefix.append(prefix[-1] + t)

    def partial_sum(n: int) -> np.ndarray:
        q, r = divmod(n, period)
        pw, gs = power_and_geometric(mono, q, 0 if stochastic else None)
        return gs @ prefix[period] + pw @ prefix[r]

    return partial_sum


def adjoint_periodic_partial_sums(products: Sequence[np.ndarray], observables: np.ndarray,
                                  stochastic: bool = False) -> Callable[[int], np.ndarray]:
    """Partial sums of ``R_k^T y`` for a periodic product (observable side).

    With ``R_(qN + r)^T = R_r^T (R_N^T)^q`` the geometric factor now sits to
    the right of the phase sum.
    """
    period = len(products) - 1
    mono_t = products[-1].T
    prefix = [np.zeros((products[0].shape[1], products[0].shape[0]))]
    for r in range(period):
        prefix.append(prefix[-1] + products[r].T)

    def partial_sum(n: int) -> np.ndarray:
        q, r = divmod(n, period)
        pw, gs = power_and_geometric(mono_t, q, 1 if stochastic else None)
        return prefix[period] @ (gs @ observables) + prefix[r] @ (pw @ observables)

    return partial_sum


def matrix_power_sums(op: np.ndarray, seed: np.ndarray,
                      stochastic: bool = False) -> Callable[[int], np.ndarray]:
    """Partial sums of ``op^k seed`` (``seed`` may be a vector or a matrix)."""

    def partial_sum(n: int) -> np.ndarray:
        _, gs = power_and_geometric(op, n, 0 if stochastic else None)
        return gs @ seed

    return partial_sum
