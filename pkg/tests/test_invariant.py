import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import H0, H1, P0, P1, power_iteration, random_cocycle, random_markov
from markov_cocycle.core import Density, MarkovCocycle, compose_pullback
from markov_cocycle.driving import FiniteCycle, SampledBernoulliPath
from markov_cocycle.invariant import (FAIL, INCONCLUSIVE, PASS, Verdict, banach_surrogate,
                                      cesaro_pullback, ladder_verdict, level_set_check,
                                      precompactness_diagnostics, pullback_sequence,
                                      surrogate_density, ui_phi, ui_profile, verify_theorem_a)

M2 = np.array([[0.9, 0.5], [0.1, 0.5]])


def dens(v):
    v = np.asarray(v, float)
    return Density(v, np.full(len(v), 1.0 / len(v)))


@pytest.fixture
def constant():
    return MarkovCocycle([M2], FiniteCycle(1))


class TestPullbackSequence:
    def test_identity(self):
        c = MarkovCocycle([np.eye(3)], FiniteCycle(1))
        f = dens([0.2, 0.3, 0.5])
        tr = pullback_sequence(c, 0, 5, f)
        assert len(tr) == 6 and all(x == f for x in tr.iterates)

    def test_constant_converges(self, constant):
        tr = pullback_sequence(constant, 0, 200, dens([0.0, 1.0]))
        assert np.allclose(tr.masses[-1], [5 / 6, 1 / 6], atol=1e-12)
        assert np.allclose(power_iteration(M2), [5 / 6, 1 / 6])

    def test_period2(self, period2):
        tr = pullback_sequence(period2, 0, 2, dens([1.0, 0.0]))
        assert np.allclose(tr.masses, [[1, 0], [0.9, 0.1], [0.55, 0.45]], atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 12))
    def test_matches_brute_force(self, seed, period, n):
        r = np.random.default_rng(seed)
        c = random_cocycle(r, 3, period)
        w = int(r.integers(period))
        f = dens(r.dirichlet(np.ones(3)))
        tr = pullback_sequence(c, w, n, f)
        assert tr.iterates[0] == f
        for k in range(n + 1):
            assert np.allclose(tr.masses[k], compose_pullback(c, w, k, f).masses, atol=1e-12)

    def test_bernoulli_matches_brute_force(self, rng):
        c = MarkovCocycle([random_markov(rng, 3) for _ in range(3)],
                          SampledBernoulliPath(3, (0.2, 0.3, 0.5), seed=9))
        tr = pullback_sequence(c, 40, 30)
        for k in (0, 1, 7, 30):
            assert np.allclose(tr.masses[k], compose_pullback(c, 40, k, Density.uniform(3)).masses)

    def test_pow2_record(self, constant):
        tr = pullback_sequence(constant, 0, 100, record="pow2")
        assert list(tr.steps) == [0, 1, 2, 4, 8, 16, 32, 64, 100]

    def test_dimension_mismatch(self, constant):
        with pytest.raises(ValueError):
            pullback_sequence(constant, 0, 3, dens([0.2, 0.3, 0.5]))


class TestCesaro:
    def test_identity(self):
        c = MarkovCocycle([np.eye(2)], FiniteCycle(1))
        r = cesaro_pullback(c, 0, dens([0.3, 0.7]))
        assert r.converged and r.limit == dens([0.3, 0.7])
        # first checkpoint of the gap schedule
        assert r.n_used == 2

    def test_constant(self, constant):
        r = cesaro_pullback(constant, 0, dens([0.0, 1.0]), tol=1e-12)
        assert r.converged
        assert np.allclose(r.limit.masses, [5 / 6, 1 / 6], atol=1e-11)

    def test_period2(self, period2):
        for w, h in ((0, H0), (1, H1)):
            r = cesaro_pullback(period2, w, tol=1e-12)
            assert r.converged and np.abs(r.limit.masses - h).sum() < 1e-11

    def test_stepping_path_agrees(self, period2, monkeypatch):
        import markov_cocycle.invariant as inv
        closed = cesaro_pullback(period2, 0, tol=1e-7)
        monkeypatch.setattr(inv, "CLOSED_FORM_MAX_DIM", 0)
        stepped = cesaro_pullback(period2, 0, tol=1e-7)
        assert closed.n_used == stepped.n_used
        # a million float steps against binary powering
        assert np.abs(closed.limit.masses - stepped.limit.masses).sum() < 1e-9

    def test_reports_non_convergence(self, period2):
        r = cesaro_pullback(period2, 0, tol=1e-12, n_max=64)
        assert not r.converged and r.n_used == 64

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_averages_are_densities(self, seed):
        r = np.random.default_rng(seed)
        c = random_cocycle(r, 4, int(r.integers(1, 4)))
        out = cesaro_pullback(c, 0, dens(r.dirichlet(np.ones(4))), n_fixed=int(r.integers(1, 50)))
        assert np.all(out.limit.masses >= 0) and abs(out.limit.masses.sum() - 1) < 1e-12


class TestSurrogate:
    def test_identity(self):
        c = MarkovCocycle([np.eye(4)], FiniteCycle(1))
        assert banach_surrogate(c, 0, [0, 2]).values[0] == pytest.approx(0.5)

    def test_constant(self, constant):
        assert banach_surrogate(constant, 0, [0], tol=1e-12).values[0] == pytest.approx(5 / 6,
                                                                                      abs=1e-11)

    def test_period2(self, period2):
        s = banach_surrogate(period2, 0, [0], tol=1e-12)
        assert s.converged and s.values[0] == pytest.approx(41 / 86, abs=1e-11)
        mask = np.array([False, True])
        assert banach_surrogate(period2, 1, mask, tol=1e-12).values[0] == pytest.approx(52 / 86,
                                                                                      abs=1e-11)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_additive(self, seed):
        r = np.random.default_rng(seed)
        c = random_cocycle(r, 6, 3)
        perm = r.permutation(6)
        e, f = perm[:2], perm[2:4]
        union = banach_surrogate(c, 1, np.concatenate([e, f]), tol=1e-6, n_max=2**14)
        n = union.n_used
        parts = (banach_surrogate(c, 1, e, n_fixed=n).values[0]
                 + banach_surrogate(c, 1, f, n_fixed=n).values[0])
        assert abs(union.values[0] - parts) <= 1e-12

    def test_equivariant(self, rng):
        c = random_cocycle(rng, 5, 3)
        s = {w: surrogate_density(c, w, 1e-10) for w in range(3)}
        n = min(x.n_used for x in s.values())
        for w in range(3):
            nxt = (w + 1) % 3
            res = np.abs(c.matrix_at(w) @ s[w].values - s[nxt].values).sum()
            assert res <= 1e-10 + 2 / n


class TestUIProfile:
    def test_uniform(self):
        d = 8
        deltas = np.linspace(0, 1, 17)
        assert np.allclose(ui_phi(np.full(d, 1 / d), np.full(d, 1 / d), deltas), deltas)

    def test_one_cell_capture(self):
        phi = ui_phi(np.array([0.7, 0.1, 0.1, 0.1]), np.full(4, 0.25), [0.25, 0.5, 1.0])
        assert np.allclose(phi, [0.7, 0.8, 1.0])

    def test_ties_taken_by_index(self):
        # same density everywhere: the partial cell makes the answer tie-independent
        assert ui_phi(np.full(3, 1 / 3), np.full(3, 1 / 3), [0.5])[0, 0] == pytest.approx(0.5)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_lipschitz(self, seed):
        r = np.random.default_rng(seed)
        d = int(r.integers(2, 20))
        c = MarkovCocycle([random_markov(r, d, 0.5)], FiniteCycle(1))
        tr = pullback_sequence(c, 0, 10, dens(r.dirichlet(np.ones(d) * 0.3)))
        deltas = np.sort(r.random(30))
        prof = ui_profile(tr, np.concatenate([deltas, [1.0]]))
        phi = prof.phi
        assert np.all(np.diff(phi) >= -1e-15)
        assert phi[-1] == pytest.approx(1.0, abs=1e-12)
        maxd = tr.values.max()
        assert np.all(np.diff(phi) <= np.diff(prof.deltas) * maxd + 1e-12)


class TestDiagnostics:
    def test_report_fields(self, constant):
        tr = pullback_sequence(constant, 0, 50)
        diag = precompactness_diagnostics(tr, p=2.0, h={0: dens([5 / 6, 1 / 6])})
        assert diag.dominating_norm >= 1.0
        assert diag.lp_sup >= 1.0
        assert diag.level_sets["pass"]
        assert diag.profile.at(1.0) == pytest.approx(1.0)

    def test_level_sets_detect_zero_region(self):
        h = {0: np.array([0.5, 0.5, 0.0, 0.0])}
        chk = level_set_check(h, [0], np.full(4, 0.25))
        assert chk["min_measure"][-1] == pytest.approx(0.5)
        assert not chk["pass"]

    def test_ladder_verdict(self):
        assert ladder_verdict({64: 0.9, 256: 0.95, 1024: 0.97}, 1 / 64).fails
        assert not ladder_verdict({64: 0.9, 256: 0.5, 1024: 0.2}, 1 / 64).fails
        assert not ladder_verdict({64: 0.1, 256: 0.2, 1024: 0.3}, 1 / 64).fails
        # roundoff-level decrease still counts as nondecreasing
        assert ladder_verdict({64: 1 - 1e-14, 256: 1 - 3e-14}, 1 / 64).fails


class TestTheoremA:
    def test_identity(self):
        c = MarkovCocycle([np.eye(3)], FiniteCycle(1))
        rep = verify_theorem_a(c)
        assert rep.status == PASS and not rep.contradiction

    def test_period2(self, period2):
        seeds = [dens([0.9, 0.1])]
        rep = verify_theorem_a(period2, seeds=seeds, tol=1e-12)
        assert rep.status == PASS
        assert all(v.status == PASS for v in rep.verdicts.values())
        for r in rep.per_fiber:
            assert max(r.agreement.values()) <= 1e-10
            assert max(r.matched.values()) <= 2e-12
        assert rep.verdicts["1"].detail.startswith("trivially satisfied")

    def test_bernoulli_defers_lift(self):
        c = MarkovCocycle([P0, P1], SampledBernoulliPath(2, (0.5, 0.5), seed=1))
        rep = verify_theorem_a(c, fibers=[0, 1], tol=1e-6)
        assert {rep.verdicts[k].status for k in "134"} == {INCONCLUSIVE}
        assert rep.verdicts["5"].status == PASS and rep.verdicts["2"].status == PASS
        assert rep.status == INCONCLUSIVE and not rep.contradiction

    def test_contradiction_flag(self, period2):
        from markov_cocycle.lift import build_lift, lift_consistency_report
        lr = lift_consistency_report(build_lift(period2), tol=1e-9)
        lr.condition1 = Verdict(FAIL, detail="injected")
        rep = verify_theorem_a(period2, lift_report=lr)
        assert rep.contradiction and rep.status == FAIL

    def test_parallel_matches_serial(self, rng):
        c = random_cocycle(rng, 4, 4)
        a = verify_theorem_a(c, tol=1e-9)
        b = verify_theorem_a(c, tol=1e-9, jobs=3)
        for x, y in zip(a.per_fiber, b.per_fiber):
            assert np.array_equal(x.surrogate.values, y.surrogate.values)

    def test_empty_fibers(self, period2):
        with pytest.raises(ValueError):
            verify_theorem_a(period2, fibers=[])
