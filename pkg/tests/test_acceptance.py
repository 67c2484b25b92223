"""Acceptance criteria, one test each.

Every test appends a ``PASS``/``FAIL`` line to the terminal summary, so a plain
``pytest -v`` run ends with the full scorecard.
"""

import time
from contextlib import contextmanager

import numpy as np
import scipy.sparse as sp

from conftest import ACCEPTANCE_LINES, H0, H1, P0, P1, power_iteration, random_cocycle, random_markov
from markov_cocycle.core import Density, MarkovCocycle, equivariance_residual
from markov_cocycle.driving import FiniteCycle
from markov_cocycle.invariant import ladder_theorem_a, ui_phi, verify_theorem_a, cesaro_pullback
from markov_cocycle.lift import (FlatIndex, build_lift, global_norm, iota, lift_fiberwise,
                                 skew_ulam_equivalence)
from markov_cocycle.met import (NormedCocycle, cesaro_iterate, coboundary_fit, met_verify,
                                rotation, telescoping_check)
from markov_cocycle.transfer import (Partition, RandomMapFamily, doubling, fibered_report,
                                     lsv_map, pf_duality_check, tripling, ulam_matrix)


@contextmanager
def criterion(num, title, limit):
    t0 = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        dt = time.perf_counter() - t0
        ok = ok and dt < limit
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  [{num}] {title} "
                                f"({dt:.2f} s, limit {limit:g} s)")
        print(ACCEPTANCE_LINES[-1])
    assert dt < limit, f"took {dt:.2f} s"


def test_1_period2_ground_truth():
    with criterion(1, "period-2 ground truth", 1.0):
        c = MarkovCocycle([P0, P1], FiniteCycle(2))
        oracle0 = power_iteration(P1 @ P0)
        assert np.abs(oracle0 - H0).sum() <= 1e-10
        h = {w: cesaro_pullback(c, w, tol=1e-12).limit for w in (0, 1)}
        assert np.abs(h[0].masses - oracle0).sum() <= 1e-10
        assert np.abs(h[1].masses - H1).sum() <= 1e-10
        assert equivariance_residual(c, h) <= 1e-10


def test_2_theorem_a_consistency():
    with criterion(2, "three constructions agree on 10 random cocycles", 30.0):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(10):
            c = random_cocycle(rng, int(rng.integers(2, 17)), int(rng.integers(1, 9)))
            rep = verify_theorem_a(c, tol=1e-10)
            assert not rep.contradiction
            for r in rep.per_fiber:
                worst = max(worst, *r.agreement.values())
        assert worst <= 1e-8, worst


def test_3_lift_identities():
    with criterion(3, "lift commutation, stochasticity, skew product", 5.0):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n, d = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            c = random_cocycle(rng, d, n)
            lift = build_lift(c)
            table = {w: rng.dirichlet(np.ones(d)) for w in range(n)}
            gap = np.abs(lift.entries @ iota(table, lift.index)
                         - iota(lift_fiberwise(c, table), lift.index)).max()
            assert gap <= 1e-12
            assert np.abs(lift.column_sums() - 1).max() <= 1e-12
        fam = RandomMapFamily([doubling(), tripling()], FiniteCycle(2))
        for d in (4, 6, 12):
            assert skew_ulam_equivalence(fam, Partition(d)) <= 1e-12


def test_4_fibered_certificate():
    with criterion(4, "affine full-branch certificate", 10.0):
        fam = RandomMapFamily([doubling(), tripling()], FiniteCycle(2))
        for w in (0, 1):
            rep = fibered_report(fam, w, 6, epsilons=(0.1, 0.01))
            assert rep.C == 1.0 and rep.c == 1.0
            assert rep.lemma_violations == 0 and rep.lemma_checked > 0
            assert all(rep.ui_checks[e]["pass"] for e in (0.1, 0.01))
            assert rep.passed


def test_5_lsv_negative_control():
    with criterion(5, "LSV ladder loses uniform integrability", 60.0):
        fam = RandomMapFamily([lsv_map(1.5)], FiniteCycle(1))
        ladder = (64, 256, 1024)
        cocycles = {d: fam.ulam_cocycle(Partition(d)) for d in ladder}
        out = ladder_theorem_a(cocycles, 0, delta=1 / 64, level=0.5)
        tv = out["trace"]
        assert tv.nondecreasing and tv.phi[-1] >= 0.5 and tv.fails
        assert not out["contradiction"]
        # oracle: plain power iteration piles mass near the indifferent point
        m = sp.csr_matrix(cocycles[1024].matrices[0])
        v = np.full(1024, 1 / 1024)
        for _ in range(2048):
            v = m @ v
        assert v[:16].sum() >= 0.5
        assert ui_phi(v, np.full(1024, 1 / 1024), [1 / 64])[0, 0] >= v[:16].sum() - 1e-12
        rep = fibered_report(fam, 0, 6)
        assert rep.verdicts["distortion"] == "fail"


def _contraction(rng, d):
    m = rng.normal(size=(d, d))
    return m / np.abs(m).sum(axis=0).max()


def test_6_met_suite():
    with criterion(6, "mean ergodic theorem suite", 30.0):
        rng = np.random.default_rng(13)
        for k in range(10):
            n, d = int(rng.integers(1, 6)), int(rng.integers(2, 6))
            gens = [_contraction(rng, d) if k % 2 else random_markov(rng, d) for _ in range(n)]
            c = NormedCocycle(gens, FiniteCycle(n))
            f = {w: rng.normal(size=d) for w in range(n)}
            assert all(r["holds"] for r in telescoping_check(c, f))
            rep = met_verify(c, f, tol=1e-10)
            if not rep.all_converged:
                continue
            assert rep.max_equivariance <= 1e-8
            for eps in (1e-2, 1e-4):
                assert coboundary_fit(c, f, rep.h, eps).achieved
        rot = NormedCocycle([rotation(np.sqrt(2))], FiniteCycle(1), "euclidean")
        h, _, ok = cesaro_iterate(rot, 0, [1.0, 0.5], tol=1e-10)
        assert ok and np.linalg.norm(h) <= 1e-8


def test_7_invariant_suite():
    with criterion(7, "type invariants on 100 instances each", 30.0):
        rng = np.random.default_rng(17)
        for _ in range(100):
            d = int(rng.integers(1, 12))
            m = random_markov(rng, d, float(rng.random()) * 0.8)
            assert np.abs(m.sum(axis=0) - 1).max() <= 1e-12 and m.min() >= 0
            f = Density(rng.dirichlet(np.ones(d)), np.full(d, 1 / d))
            out = m @ f.masses
            assert abs(out.sum() - 1) <= 1e-12 and out.min() >= 0
            g = rng.normal(size=d)
            assert abs(out @ g - f.masses @ (m.T @ g)) <= 1e-12
        for _ in range(100):
            n, d = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            idx = FlatIndex(n, d)
            table = {w: rng.normal(size=d) for w in range(n)}
            assert abs(np.abs(iota(table, idx)).sum() - global_norm(table, idx)) <= 1e-12
        for _ in range(100):
            d = int(rng.integers(2, 40))
            cells = np.full(d, 1 / d)
            masses = rng.dirichlet(np.full(d, 0.3))
            deltas = np.sort(rng.random(25))
            phi = ui_phi(masses, cells, deltas)[0]
            assert np.all(np.diff(phi) >= -1e-15)
            assert np.all(np.diff(phi) <= np.diff(deltas) * (masses / cells).max() + 1e-12)
        # transfer-operator duality on the affine maps
        for _ in range(100):
            t = (doubling(), tripling())[int(rng.integers(2))]
            f = Density(rng.dirichlet(np.ones(12)), np.full(12, 1 / 12))
            # 48 subsamples split evenly over the 2 or 3 image cells
            assert pf_duality_check(t, Partition(12), f, rng.normal(size=12), 48) <= 1e-12
