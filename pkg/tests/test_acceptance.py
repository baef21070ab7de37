"""End-to-end acceptance checks on the bundled fixtures.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. The long ensembles are shared through module fixtures.
"""
import json
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from compoundrisk import cli
from compoundrisk.catalog import quantile_map_weights, resample_period, weighted_cdf
from compoundrisk.damage import BRANCH, CIRCUIT, LINE, NODE, SUBSTATION, ComponentTable, DamageState
from compoundrisk.harden import GREEDY, RANDOM_DISTRIBUTION, RANDOM_TRANSMISSION, evaluate_strategies
from compoundrisk.heat import (HeatLookup, daily_correction, heat_index_rh, relative_humidity,
                               saturation_specific_humidity)
from compoundrisk.powerflow import served_customers, solve_flow
from compoundrisk.recovery import outage_series, RepairTimeline
from compoundrisk.risk import SimulationSettings, run_ensemble
from compoundrisk.scaling import Attributor, attribution_brute_force, pooled_curve, scaling_curve
from compoundrisk.stats import exceedance_stats

import netbuild
from conftest import record_criterion

pytestmark = pytest.mark.slow

N_PERIODS = 2000


@pytest.fixture(scope="module")
def future_cfg():
    return cli.resolve_config("future", {"n_periods": N_PERIODS})


@pytest.fixture(scope="module")
def inputs(future_cfg):
    return cli.load_inputs(future_cfg)


@pytest.fixture(scope="module")
def models(future_cfg, inputs):
    hist = cli.build_model(future_cfg, inputs, baseline=True, collect_impacts=True)
    fut = cli.build_model(future_cfg, inputs)
    return hist, fut


@pytest.fixture(scope="module")
def ensembles(future_cfg, models):
    t0 = time.perf_counter()
    hist = run_ensemble(models[0], N_PERIODS, future_cfg.seed)
    fut = run_ensemble(models[1], N_PERIODS, future_cfg.seed)
    return hist, fut, time.perf_counter() - t0


# -- 1 -----------------------------------------------------------------------

def test_criterion_01_calibration(tmp_path):
    cfg = cli.resolve_config("calibrate")
    t0 = time.perf_counter()
    rep = cli.cmd_calibrate(cfg, tmp_path)
    took = time.perf_counter() - t0
    ike, harvey = rep["achieved"]["ike_like"], rep["achieved"]["harvey_like"]
    # the bundled defaults are the fitted parameters
    inputs = cli.load_inputs(cli.resolve_config("historical"))
    fitted = json.loads((tmp_path / "fragility_calibrated.json").read_text())
    shipped = inputs.fragility.to_dict()
    same = all(abs(fitted[c]["median_ms"] - shipped[c]["median_ms"]) < 1e-6 for c in fitted if c in shipped
               and isinstance(fitted[c], dict))
    ok = abs(ike - 0.63) <= 0.10 and harvey <= 0.04 and took < 300 and same
    record_criterion(1, ok, f"ike {ike:.3f} (0.63 +/- 0.10), harvey {harvey:.3f} (<= 0.04), "
                            f"{took:.0f} s, shipped defaults match fit: {same}")
    assert ok


# -- 2 -----------------------------------------------------------------------

def test_criterion_02_scaling(ensembles):
    ten = netbuild.ten_node()
    att = Attributor(ten)
    comps = ([(BRANCH, f"b{i}") for i in range(10)] + [(NODE, f"n{i}") for i in range(10)]
             + [(CIRCUIT, f"n{i}") for i in range(10)] + [(SUBSTATION, "S1")])
    exact = True
    import itertools
    for k in range(1, 4):
        for subset in itertools.combinations(comps, k):
            dmg = DamageState(frozenset(subset))
            served = [(SUBSTATION, "S1") not in dmg.failed]
            a = att(att.table.to_mask(dmg), served)
            b = attribution_brute_force(ten, dmg, served)
            ca, cb = scaling_curve(list(a.values())), scaling_curve(list(b.values()))
            exact &= a == b and np.array_equal(ca.W, cb.W) and np.array_equal(ca.P, cb.P)
    hist = ensembles[0]
    per_event = [e.impacts for e in hist.events if e.impacts]
    curve = pooled_curve(per_event)
    w_ge_p = bool(np.all(curve.W >= curve.P - 1e-12))
    ok = exact and len(per_event) >= 500 and 0.6 <= curve.top20_share <= 0.9 and w_ge_p
    record_criterion(2, ok, f"enumeration exact: {exact}; {len(per_event)} events, "
                            f"{curve.n_disruptions} disruptions, top-20% share {curve.top20_share:.3f}, W>=P: {w_ge_p}")
    assert ok


# -- 3 -----------------------------------------------------------------------

def test_criterion_03_dc_flow(fixture_network):
    rng = np.random.default_rng(2024)
    net = fixture_network
    lines = {ln.id: ln for ln in net.all_lines()}
    worst_balance, violations = 0.0, 0
    for _ in range(1000):
        keys = [(SUBSTATION, s.id) for s in net.substations if rng.random() < 0.1]
        keys += [(LINE, i) for i in lines if rng.random() < 0.25]
        sol = solve_flow(net, DamageState(frozenset(keys)))
        for s in sol.island_solutions:
            gen, dem = sum(s.generation.values()), sum(s.served_demand.values())
            worst_balance = max(worst_balance, abs(gen - dem) / max(1.0, dem))
            violations += sum(abs(f) > lines[i].limit_mw * (1 + 1e-9) for i, f in s.flows.items())
    two = solve_flow(netbuild.two_node_shed(), DamageState(frozenset()))
    served = two.served_demand["S1"]
    ok = worst_balance <= 1e-6 and violations == 0 and served == pytest.approx(5.0, abs=1e-12)
    record_criterion(3, ok, f"max balance error {worst_balance:.1e}, limit violations {violations}, "
                            f"two-node served {served:.12g} MW")
    assert ok


# -- 4 -----------------------------------------------------------------------

def test_criterion_04_poisson(historical_catalog):
    cat = replace(historical_catalog, annual_frequency=1.5)
    seq = resample_period(cat, 10_000, 77)
    counts = np.bincount([e[0] for e in seq.events], minlength=10_000)
    mean, disp = counts.mean(), counts.var(ddof=1) / counts.mean()
    kmax = 6
    obs = np.bincount(np.minimum(counts, kmax), minlength=kmax + 1)
    p = stats.poisson.pmf(np.arange(kmax), 1.5)
    p = np.append(p, 1 - p.sum())
    pval = stats.chisquare(obs, p * len(counts)).pvalue
    ok = abs(mean - 1.5) / 1.5 < 0.02 and 0.95 <= disp <= 1.05 and pval > 0.01
    record_criterion(4, ok, f"mean {mean:.4f}, var/mean {disp:.4f}, chi-square p {pval:.3f}")
    assert ok


# -- 5 -----------------------------------------------------------------------

def weighted_ks(values, weights, target):
    x, c = weighted_cdf(values, weights)
    grid = np.sort(np.concatenate([x, target]))
    f1 = c[np.searchsorted(x, grid, side="right") - 1] * (grid >= x[0])
    f2 = np.searchsorted(np.sort(target), grid, side="right") / len(target)
    return float(np.max(np.abs(f1 - f2)))


def test_criterion_05_quantile_mapping():
    rng = np.random.default_rng(5)
    n = 2000
    ref = rng.normal(45, 10, n)
    model_hist = rng.normal(45, 10, n) + 5.0
    w = quantile_map_weights(model_hist.copy(), model_hist, ref)
    ks = weighted_ks(model_hist, w, ref)
    unit = quantile_map_weights(model_hist, model_hist, model_hist.copy())
    dev = float(np.max(np.abs(unit - 1.0)))
    ok = ks < 0.05 and dev <= 1e-9
    record_criterion(5, ok, f"KS after reweighting {ks:.4f} (< 0.05), no-bias max |w - 1| {dev:.1e}")
    assert ok


# -- 6 -----------------------------------------------------------------------

def test_criterion_06_heat_stack(models):
    p = 1000.0
    rh_err = max(abs(relative_humidity(t, saturation_specific_humidity(t, p), p) - 100.0) for t in (5, 20, 35))
    hi = heat_index_rh(32.2, 70.0)
    const = float(np.max(np.abs(daily_correction(np.full(12, 25.0), np.full(12, 23.0)) + 2.0)))
    # composite adjustment with the bundled anomaly table against none, on fixed climatologies
    never_up = True
    for m in models:
        adj = HeatLookup(m.climatology, m.settings.anomaly).table
        raw = HeatLookup(m.climatology, adjust=False).table
        never_up &= bool(np.all(adj <= raw))
    fut = models[1]
    plain = fut.with_network(fut.network, settings=replace(fut.settings, composite_adjust=False))
    a = exceedance_stats(run_ensemble(fut, 200, 3), 5).compound.mean
    b = exceedance_stats(run_ensemble(plain, 200, 3), 5).compound.mean
    never_up &= a <= b
    ok = rh_err <= 0.1 and abs(hi - 40.6) <= 1.0 and const <= 1e-9 and never_up
    record_criterion(6, ok, f"RH error {rh_err:.2e} %, HI(32.2, 70) {hi:.2f} C, constant bias error {const:.1e}, "
                            f"compound p5 adjusted {a:.4f} <= unadjusted {b:.4f}: {never_up}")
    assert ok


# -- 7 -----------------------------------------------------------------------

def test_criterion_07_climate_direction(ensembles, future_cfg):
    hist, fut, took = ensembles
    rows, floor = cli.relative_risk_rows(hist, fut, future_cfg.floor)
    r = rows[5]
    ratios = {k: r[f"{k}_ratio"] for k in ("outage", "heatwave", "compound")}
    direction = all(r[f"{k}_future"] > r[f"{k}_historical"] for k in ratios)
    ok = (direction and all(v >= 2 for v in ratios.values())
          and ratios["compound"] >= max(ratios["outage"], ratios["heatwave"]) and took < 1800)
    record_criterion(7, ok, "ratios at d=5: " + ", ".join(f"{k} {v:.2f}" for k, v in ratios.items())
                     + f" (floor {floor:.2e}); two {N_PERIODS}-period ensembles in {took:.0f} s")
    assert ok


# -- 8 -----------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="greedy undergrounding does not reach 3x the random-distribution "
                                       "reduction on the fixture network; see the decisions ledger")
def test_criterion_08_hardening(future_cfg, models):
    h = future_cfg.harden
    rows, _ = evaluate_strategies(models[1], h.strategies, h.rates, h.n_periods, future_cfg.seed,
                                  plan_seed=h.plan_seed, d=future_cfg.outage_days)
    by = {(r["strategy"], r["rate"]): r["compound_mean"] for r in rows}
    base = by[(GREEDY, 0.0)]
    red = {s: base - by[(s, 0.05)] for s in (GREEDY, RANDOM_DISTRIBUTION, RANDOM_TRANSMISSION)}
    greedy_curve = [by[(GREEDY, r)] for r in h.rates]
    monotone = bool(np.all(np.diff(greedy_curve) <= 1e-12))
    factor = red[GREEDY] / red[RANDOM_DISTRIBUTION] if red[RANDOM_DISTRIBUTION] > 0 else float("inf")
    ok = factor >= 3 and red[RANDOM_DISTRIBUTION] >= red[RANDOM_TRANSMISSION] and monotone
    record_criterion(8, ok, f"reductions at 0.05: greedy {red[GREEDY]:.4f}, random distribution "
                            f"{red[RANDOM_DISTRIBUTION]:.4f}, random transmission {red[RANDOM_TRANSMISSION]:.4f}; "
                            f"greedy / random {factor:.2f} (>= 3); dist >= trans "
                            f"{red[RANDOM_DISTRIBUTION] >= red[RANDOM_TRANSMISSION]}; greedy non-increasing {monotone}")
    assert ok


# -- 9 -----------------------------------------------------------------------

def test_criterion_09_determinism(tmp_path, monkeypatch, capsys):
    # let the process pool run even on a single-core machine
    import compoundrisk.risk as risk
    monkeypatch.setattr(risk.os, "cpu_count", lambda: 4)
    same = {}
    for cmd in ("simulate", "scaling"):
        outs = []
        for k, workers in enumerate((1, 3, 1)):
            d = tmp_path / f"{cmd}{k}"
            code = cli.main([cmd, "future", "--periods", "24", "--workers", str(workers), "-o", str(d)])
            assert code == 0
            outs.append({p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
        same[cmd] = outs[0] == outs[1] == outs[2]
    capsys.readouterr()
    ok = all(same.values())
    record_criterion(9, ok, "byte-identical across reruns and worker counts 1/3: "
                     + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok


# -- 10 ----------------------------------------------------------------------

def test_criterion_10_recovery(models, ensembles):
    m = models[0]
    rng = np.random.default_rng(10)
    weights = m.catalog.weights / m.catalog.weights.sum()
    cust = m.customers
    tot = cust.sum()
    events, monotone, crew_ok, stepwise_ok = 0, True, True, True
    while events < 1000:
        si = int(rng.choice(len(weights), p=weights))
        R, failed, _ = m.event_restoration(si, rng, int(rng.integers(2 ** 63)))
        if not failed.any():
            continue
        events += 1
        grid = np.concatenate([[0.0], np.unique(R)])
        restored = np.array([cust[R <= t].sum() for t in grid]) / tot
        monotone &= bool(np.all(np.diff(restored) >= 0))
        seed = events
        done = m.planner.schedule(failed, m.resources, seed)
        for extra in (dict(transmission_crews=m.resources.transmission_crews + 1),
                      dict(distribution_crews=m.resources.distribution_crews + 1)):
            more = m.planner.schedule(failed, replace(m.resources, **extra), seed)
            crew_ok &= bool(np.all(more <= done + 1e-9))
        if events <= 20:
            # re-solve the grid step by step and compare with the exact restoration hours
            t = m.table
            keys = [(str(t.classes[k]), t.ids[k]) for k in np.flatnonzero(failed)]
            tl = RepairTimeline({key: float(done[t.lookup[key]]) for key in keys})
            dmg = DamageState(frozenset(keys))
            s = outage_series(m.network, dmg, tl, step=6.0)
            Rx = m.restorer.restoration(done)
            stepwise_ok &= all(abs(cust[Rx > tt].sum() / tot - f) < 1e-12 for tt, f in zip(s.time, s.fraction_out))
            stepwise_ok &= bool(np.all(np.diff(s.fraction_out) <= 1e-12))
    p90 = cli.full_restoration_p90(ensembles[0])
    ok = monotone and crew_ok and stepwise_ok and 10 <= p90 <= 20
    record_criterion(10, ok, f"{events} events: restoration non-decreasing {monotone}, stepwise re-solve agrees "
                             f"{stepwise_ok}, extra crew never delays {crew_ok}; P90 full restoration {p90:.1f} d")
    assert ok
