"""Command-line experiment runner.

Usage: ``markov-cocycle --config exp.cfg [--out DIR] [--seed N] [--jobs K] [--verbose]``

Exit codes: 0 all checks pass, 1 configuration error, 2 a check failed or a
contradiction was flagged, 3 inconclusive (nothing failed).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import invariant, lift as lift_mod, met
from .config import ConfigError, ExperimentConfig, load_config
from .core import Density, MarkovCocycle, read_generator_table
from .driving import FiniteCycle, make_driving
from .report import (EXIT_CONFIG, FAIL, INCONCLUSIVE, PASS, HarnessResult, Table,
                     emit_report, exit_code)
from .transfer import MapError, Partition, RandomMapFamily, fibered_report, read_map_family

log = logging.getLogger("markov_cocycle")


def _driver(cfg: ExperimentConfig):
    d = cfg.driving
    return make_driving(d["kind"], n=d["n"], alphabet=d["alphabet"], probs=d["probs"],
                        seed=d["seed"], labels=d["labels"])


def _resolutions(cfg: ExperimentConfig) -> list[int]:
    return cfg.ladder or [cfg.resolution]


def _cocycles(cfg: ExperimentConfig, drv) -> dict[int, MarkovCocycle]:
    """Cocycle per resolution (a single entry for matrix tables)."""
    if cfg.matrices is not None:
        c = MarkovCocycle(read_generator_table(cfg.matrices), drv)
        return {c.dim: c}
    fam = RandomMapFamily(read_map_family(cfg.maps), drv)
    return {d: fam.ulam_cocycle(Partition(d), cfg.subsamples) for d in _resolutions(cfg)}


def _fibers(cfg: ExperimentConfig, drv) -> list[int]:
    if cfg.fibers is not None:
        return cfg.fibers
    return list(drv.points) if isinstance(drv, FiniteCycle) else list(range(8))


def _random_density(rng: np.random.Generator, d: int) -> Density:
    x = rng.dirichlet(np.ones(d))
    return Density(x / x.sum(), np.full(d, 1.0 / d))


# --- harnesses --------------------------------------------------------------


def run_theorem_a(cfg: ExperimentConfig, drv, jobs: int) -> HarnessResult:
    cocycles = _cocycles(cfg, drv)
    tol = cfg.default_tol
    if len(cocycles) > 1:
        return _run_ladder(cfg, cocycles)
    (d, c), = cocycles.items()
    rng = np.random.default_rng(cfg.seed)
    seeds = [_random_density(rng, d) for _ in range(cfg.seed_densities)]
    rep = invariant.verify_theorem_a(c, _fibers(cfg, drv), seeds, tol, cfg.n_max, cfg.trace,
                                     seed=cfg.seed, jobs=jobs)
    res = HarnessResult("theorem-a", rep.status, contradiction=rep.contradiction)
    t = res.table("conditions", ["condition", "status", "residual", "horizon", "detail"])
    for k in invariant.CONDITIONS:
        v = rep.verdicts[k]
        t.rows.append([k, v.status, v.residual, v.horizon, v.detail])
    t = res.table("fibers", ["fiber", "cesaro_n", "cesaro_converged", "cesaro_delta",
                             "surrogate_n", "surrogate_converged", "additivity",
                             "cesaro_vs_surrogate", "cesaro_vs_lift", "surrogate_vs_lift"])
    dens = res.table("densities", ["fiber", "cell", "cesaro", "surrogate", "lift"])
    ui = res.table("ui_profile", ["fiber", "delta", "phi"])
    for r in rep.per_fiber:
        a = r.agreement
        t.rows.append([r.fiber, r.cesaro.n_used, r.cesaro.converged, r.cesaro.delta,
                       r.surrogate.n_used, r.surrogate.converged, r.additivity,
                       a.get("cesaro-surrogate", ""), a.get("cesaro-lift", ""),
                       a.get("surrogate-lift", "")])
        ces = r.cesaro.limit.masses if isinstance(r.cesaro.limit, Density) else r.cesaro.limit
        for i in range(d):
            lf = r.lift_fiber[i] if r.lift_fiber is not None else ""
            dens.rows.append([r.fiber, i, ces[i], r.surrogate.values[i], lf])
        prof = r.diagnostics.profile
        for dl, ph in zip(prof.deltas, prof.phi):
            ui.rows.append([r.fiber, dl, ph])
    res.summary.append(f"cells {d}, fibers {rep.fibers}, tol {tol:g}")
    for k in invariant.CONDITIONS:
        res.summary.append(f"condition ({k}): {rep.verdicts[k].status}")
    res.summary.extend(rep.notes)
    return res


def _run_ladder(cfg: ExperimentConfig, cocycles) -> HarnessResult:
    delta = cfg.ui_delta if cfg.ui_delta is not None else 1.0 / min(cocycles)
    out = invariant.ladder_theorem_a(cocycles, _fibers(cfg, cocycles[min(cocycles)].driving)[0],
                                     delta=delta, level=cfg.ui_level, horizon=cfg.ladder_horizon)
    statuses = {v.status for v in out["verdicts"].values()}
    status = FAIL if FAIL in statuses else PASS
    res = HarnessResult("theorem-a-ladder", status, contradiction=out["contradiction"])
    t = res.table("conditions", ["condition", "status", "residual", "horizon", "detail"])
    for k in invariant.CONDITIONS:
        v = out["verdicts"][k]
        t.rows.append([k, v.status, v.residual, v.horizon, v.detail])
    _ladder_tables(res, out)
    res.summary.append(f"ladder {sorted(cocycles)}, delta {delta:g}, horizon {cfg.ladder_horizon}")
    for k in invariant.CONDITIONS:
        res.summary.append(f"condition ({k}): {out['verdicts'][k].status}")
    return res


def _ladder_tables(res: HarnessResult, out: dict) -> None:
    tv, lv = out["trace"], out["limit"]
    u = res.table("uniformity", ["resolution", "delta", "trace_phi", "limit_phi"])
    for d, a, b in zip(tv.resolutions, tv.phi, lv.phi):
        u.rows.append([d, tv.delta, a, b])
    for d, tr in out["traces"].items():
        t = res.table(f"ui_d{d}", ["delta", "phi"])
        prof = invariant.ui_profile(tr)
        t.rows.extend([a, b] for a, b in zip(prof.deltas, prof.phi))
    res.summary.append(f"trace modulus nondecreasing: {tv.nondecreasing}, finest {tv.phi[-1]!r}, "
                       f"level {tv.level:g} -> {tv.status}")


def run_lift(cfg: ExperimentConfig, drv, jobs: int) -> HarnessResult:
    cocycles = _cocycles(cfg, drv)
    res = HarnessResult("lift", PASS)
    t = res.table("lift_report", ["resolution", "key", "value"])
    statuses = []
    for d, c in sorted(cocycles.items()):
        lm = lift_mod.build_lift(c)
        rep = lift_mod.lift_consistency_report(lm, cfg.default_tol, cfg.n_max, cfg.trace)
        name = "lift" if len(cocycles) == 1 else f"lift_d{d}"
        res.tables[name] = _matrix_table(lm)
        colsum = float(np.abs(lm.column_sums() - 1).max())
        rows = [("column_sum_error", colsum), ("cesaro_n", rep.n_used),
                ("converged", rep.converged), ("fixed_point_residual", rep.fixed_residual),
                ("equivariance", rep.equivariance),
                ("sweep_steps", rep.sweep["steps"]), ("sweep_monotone", rep.sweep["monotone"]),
                ("sweep_trivial", rep.sweep["trivial"]),
                ("condition1", rep.condition1.status), ("condition3", rep.condition3.status),
                ("condition4", rep.condition4.status)]
        t.rows.extend([d, k, v] for k, v in rows)
        for i, m in enumerate(rep.fiber_masses):
            t.rows.append([d, f"fiber_mass_{i}", float(m)])
        st = [rep.condition1.status, rep.condition3.status, rep.condition4.status]
        st.append(PASS if colsum <= 1e-12 else FAIL)
        statuses.extend(st)
        res.summary.append(f"d={d}: conditions (1) {st[0]}, (3) {st[1]}, (4) {st[2]}; "
                           f"column sums within {colsum:.1e}")
    res.status = _combine(statuses)
    return res


def _matrix_table(lm) -> Table:
    n = lm.dim
    tab = Table([f"c{j}" for j in range(n)])
    tab.rows = [list(map(float, row)) for row in lm.entries]
    return tab


def run_skew(cfg: ExperimentConfig, drv, jobs: int) -> HarnessResult:
    if cfg.maps is None:
        raise ConfigError("skew harness needs maps= in [cocycle]", str(cfg.source), 0, 0)
    fam = RandomMapFamily(read_map_family(cfg.maps), drv)
    res = HarnessResult("skew", PASS)
    t = res.table("skew", ["resolution", "max_deviation", "tolerance", "status"])
    statuses = []
    for d in _resolutions(cfg):
        dev = lift_mod.skew_ulam_equivalence(fam, Partition(d), cfg.subsamples)
        st = PASS if dev <= cfg.skew_tol else FAIL
        statuses.append(st)
        t.rows.append([d, dev, cfg.skew_tol, st])
        res.summary.append(f"d={d}: max deviation {dev:.3e} ({st})")
    res.status = _combine(statuses)
    return res


def _met_f(cfg: ExperimentConfig, c, fibers, rng):
    raw = cfg.f
    if raw == "uniform":
        return {w: np.full(c.dim, 1.0 / c.dim) for w in fibers}
    if raw == "random":
        return {w: rng.standard_normal(c.dim) for w in fibers}
    parts = raw.split("|")
    if len(parts) != len(fibers):
        raise ConfigError(f"f lists {len(parts)} vectors for {len(fibers)} fibers",
                          str(cfg.source), 0, 0)
    out = {}
    for w, p in zip(fibers, parts):
        v = np.array([float(x) for x in p.split(",")])
        if v.shape != (c.dim,):
            raise ConfigError(f"f vector for fiber {w} has length {len(v)}, expected {c.dim}",
                              str(cfg.source), 0, 0)
        out[w] = v
    return out


def run_met(cfg: ExperimentConfig, drv, jobs: int) -> HarnessResult:
    if cfg.matrices is None:
        raise ConfigError("met harness needs matrices= in [cocycle]", str(cfg.source), 0, 0)
    gens = read_generator_table(cfg.matrices, markov=False)
    c = met.NormedCocycle(gens, drv, cfg.norm)
    rng = np.random.default_rng(cfg.seed)
    finite = isinstance(drv, FiniteCycle)
    pts = list(drv.points) if finite else list(range(drv.alphabet_size))
    f = _met_f(cfg, c, pts, rng)
    tol = cfg.default_tol
    rep = met.met_verify(c, f, tol, cfg.n_max, _fibers(cfg, drv) if not finite else None, jobs)
    res = HarnessResult("met", rep.status)
    t = res.table("met_fibers", ["fiber", "n", "converged", "equivariance", "tolerance"])
    for w in rep.fibers:
        t.rows.append([w, rep.n_used[w], rep.converged[w], rep.equivariance[w],
                       rep.equivariance_tol])
    statuses = [rep.status]
    res.summary.append(f"contraction norm {met.contraction_check(c)!r} ({cfg.norm})")
    res.summary.append(f"max equivariance residual {rep.max_equivariance:.3e} "
                       f"vs {rep.equivariance_tol:.3e}")
    if finite and rep.all_converged:
        cb = res.table("coboundary", ["eps", "r_norm", "achieved", "fit_residual"])
        for eps in cfg.eps:
            fit = met.coboundary_fit(c, f, rep.h, eps)
            cb.rows.append([eps, fit.r_norm, fit.achieved, fit.residual])
            statuses.append(PASS if fit.achieved else FAIL)
            res.summary.append(f"coboundary eps={eps:g}: |||r||| = {fit.r_norm:.3e}")
        tel = res.table("telescoping", ["n", "gap", "bound", "holds", "commutator"])
        checks = met.telescoping_check(c, f)
        for row in checks:
            tel.rows.append([row["n"], row["gap"], row["bound"], row["holds"], row["commutator"]])
        ok = all(r["holds"] for r in checks)
        statuses.append(PASS if ok else FAIL)
        res.summary.append(f"telescoping bound n=1..64: {'holds' if ok else 'violated'}")
    res.status = _combine(statuses)
    return res


def run_fibered(cfg: ExperimentConfig, drv, jobs: int) -> HarnessResult:
    if cfg.maps is None:
        raise ConfigError("fibered-report needs maps= in [cocycle]", str(cfg.source), 0, 0)
    fam = RandomMapFamily(read_map_family(cfg.maps), drv)
    w = _fibers(cfg, drv)[0]
    rep = fibered_report(fam, w, cfg.depth, subsamples=cfg.subsamples, limit=cfg.cylinders)
    res = HarnessResult("fibered-report", PASS)
    t = res.table("distortion", ["depth", "C_n", "c_n", "max_diameter", "cylinders"])
    for n in range(rep.depth):
        t.rows.append([n + 1, rep.distortion[n], rep.min_image[n], rep.max_diameter[n],
                       rep.cylinder_counts[n]])
    v = res.table("verdicts", ["check", "status"])
    v.rows.extend([k, rep.verdicts[k]] for k in sorted(rep.verdicts))
    u = res.table("ui_cylinders", ["eps", "delta", "sets", "max_mass", "status"])
    for eps in sorted(rep.ui_checks):
        chk = rep.ui_checks[eps]
        u.rows.append([eps, chk["delta"], chk["sets"], chk["max_mass"],
                       PASS if chk["pass"] else FAIL])
    statuses = list(rep.verdicts.values())
    res.summary.append(f"fiber {w}, depth {rep.depth}: C = {rep.C!r}, c = {rep.c!r}, "
                       f"lemma violations {rep.lemma_violations}/{rep.lemma_checked}")
    if rep.verdicts["distortion"] == FAIL:
        res.summary.append("condition (3) bounded distortion: FAIL")
    for k in sorted(rep.verdicts):
        res.summary.append(f"{k}: {rep.verdicts[k]}")
    res.summary.extend(rep.notes)
    if cfg.ladder:
        cocycles = {d: fam.ulam_cocycle(Partition(d), cfg.subsamples) for d in cfg.ladder}
        delta = cfg.ui_delta if cfg.ui_delta is not None else 1.0 / cfg.ladder[0]
        out = invariant.ladder_theorem_a(cocycles, w, delta=delta, level=cfg.ui_level,
                                         horizon=cfg.ladder_horizon)
        _ladder_tables(res, out)
        statuses.append(out["trace"].status)
    res.status = _combine(statuses)
    return res


def _combine(statuses) -> str:
    if FAIL in statuses:
        return FAIL
    if INCONCLUSIVE in statuses:
        return INCONCLUSIVE
    return PASS


HARNESSES = {"theorem-a": run_theorem_a, "lift": run_lift, "skew": run_skew, "met": run_met,
             "fibered-report": run_fibered}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> tuple[int, list[HarnessResult]]:
    drv = _driver(cfg)
    result = HARNESSES[cfg.harness](cfg, drv, jobs)
    results = [result]
    emit_report(results, cfg.out)
    return exit_code(results), results


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="markov-cocycle",
                                description="Run a Markov-cocycle experiment from a config file.")
    p.add_argument("--config", required=True, type=Path, help="experiment config file")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for fiber sweeps")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if cfg.driving.get("seed") == cfg.seed:
                cfg.driving["seed"] = args.seed
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.jobs < 1:
            raise ConfigError("--jobs must be positive", "<args>", 0, 0)
        code, results = run_experiment(cfg, args.jobs)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except (MapError, ValueError, OSError) as e:
        print(f"{args.config}:0:0: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for r in results:
        log.info("%s: %s", r.name, r.status)
    print((Path(cfg.out) / "summary.txt").read_text(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
