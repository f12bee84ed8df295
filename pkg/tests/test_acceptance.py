"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected in ``RESULTS`` and echoed in the pytest
terminal summary (see ``conftest.py``).
"""

import time

import numpy as np
import pytest

from persistmon import field_io, full_gp, kernel, mission, oracles, planner, route, sogp

RESULTS = []

E2E = mission.MissionConfig(launch=(29, 77), waypoints_per_plan=4, bv_capacity=100,
                            rho_threshold=0.6, prior_random_samples=50, max_samples=2000,
                            planner_dims=(12, 12), rng_seed=0)
H0 = kernel.Hyperparameters(-2.0, 2.0, (1.0, 1.0))


def report(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# -- 1-7: component oracles -------------------------------------------------

def test_c01_sogp_matches_exact_gp():
    t0 = time.perf_counter()
    worst = 0.0
    for t in range(50):
        rng = np.random.default_rng([101, t])
        n = int(rng.integers(1, 31))
        h = oracles.random_hyper(rng)
        X, y = rng.uniform(0, 10, (n, 2)), rng.normal(size=n)
        s = sogp.init(h, sogp.SogpConfig(capacity=n, novelty_threshold=0.0))
        for x, v in zip(X, y):
            sogp.update(s, x, v)
        P = rng.uniform(0, 10, (10, 2))
        mu, var = full_gp.predict(full_gp.fit(h, X, y), P)
        smu, svar = sogp.predict_many(s, P)
        # full_gp reports measurement variance, sogp the latent one
        worst = max(worst, np.max(np.abs(mu - smu)), np.max(np.abs(var - h.sigma_n2 - svar)))
    dt = time.perf_counter() - t0
    report(1, "SOGP vs exact GP", worst < 1e-6 and dt < 10,
           f"max abs deviation {worst:.2e} (< 1e-6), {dt:.2f} s (< 10 s), 50 streams")


def _loo_models():
    return [oracles.random_loo_model(np.random.default_rng([202, t])) for t in range(100)]


def test_c02_loo_gradient():
    t0 = time.perf_counter()
    worst = 0.0
    for h, X, y in _loo_models():
        g = full_gp.loo_report(full_gp.fit(h, X, y)).gradient
        worst = max(worst, oracles.relative_error(g, oracles.loo_fd_gradient(h, X, y), floor=1e-6))
    dt = time.perf_counter() - t0
    report(2, "LOO gradient vs finite differences", worst < 1e-3 and dt < 10,
           f"max relative error {worst:.2e} (< 1e-3), {dt:.2f} s (< 10 s), 100 models")


def test_c03_loo_value():
    worst = 0.0
    for h, X, y in _loo_models():
        ll = full_gp.loo_report(full_gp.fit(h, X, y)).log_likelihood
        worst = max(worst, abs(ll - oracles.loo_by_refit(h, X, y)))
    report(3, "LOO value vs explicit refits", worst < 1e-8,
           f"max abs deviation {worst:.2e} (< 1e-8), 100 models")


def test_c04_deletion_downdate():
    q_dev, trip = 0.0, {"alpha": 0.0, "c_matrix": 0.0, "q_matrix": 0.0}
    for t in range(100):
        rng = np.random.default_rng([404, t])
        n = int(rng.integers(2, 11))
        s = oracles.random_state(rng, n, capacity=n + 1)
        j = int(rng.integers(n))
        rest = s.bv_points[np.arange(n) != j]
        d = sogp.delete(s.copy(), j)
        q_dev = max(q_dev, np.max(np.abs(d.q_matrix - np.linalg.inv(oracles.dense_gram(s.hyper, rest, noise=False)))))

        before = s.copy()
        x = rng.uniform(0, 10, 2)
        out = sogp.update(s, x, rng.normal())
        assert out.kind is sogp.Outcome.ADDED
        sogp.delete(s, s.size - 1)
        for name in trip:
            trip[name] = max(trip[name], np.max(np.abs(getattr(s, name) - getattr(before, name))))
    ok = q_dev < 1e-8 and max(trip.values()) < 1e-8
    report(4, "deletion downdate", ok,
           f"Q-hat vs direct inverse {q_dev:.2e} (< 1e-8); add-then-delete-last round trip "
           f"alpha {trip['alpha']:.2e}, C {trip['c_matrix']:.2e}, Q {trip['q_matrix']:.2e} (< 1e-8)")


def test_c05_mutual_information():
    h_dev = mi_dev = sym = 0.0
    min_mi = np.inf
    for t in range(100):
        rng = np.random.default_rng([505, t])
        s = oracles.random_state(rng, int(rng.integers(0, 8)))
        a, b = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        P = rng.uniform(0, 10, (a + b, 2))
        A, B = P[:a], P[a:]
        S = oracles.dense_posterior_cov(s, P)
        h_dev = max(h_dev, abs(planner.entropy(s, A) - oracles.dense_entropy(S[:a, :a])))
        ab, ba = planner.mutual_information(s, A, B), planner.mutual_information(s, B, A)
        ref = max(oracles.dense_mi(S, range(a), range(a, a + b))[0], 0.0)
        mi_dev = max(mi_dev, abs(ab - ref))
        sym = max(sym, abs(ab - ba))
        min_mi = min(min_mi, ab, ba)
    ok = h_dev < 1e-9 and mi_dev < 1e-9 and sym < 1e-8 and min_mi >= 0
    report(5, "entropy and MI vs dense oracle", ok,
           f"entropy {h_dev:.2e}, MI {mi_dev:.2e} (< 1e-9); symmetry {sym:.2e} (< 1e-8); "
           f"min MI {min_mi:.2e} (>= 0)")


def test_c06_planner_matches_sequential_maximizer():
    mismatches = []
    for t in range(50):
        s, grid = oracles.random_planning_state(np.random.default_rng([606, t]))
        S = oracles.dense_posterior_cov(s, grid.cells)
        for n in (2, 3, 4):
            got = list(planner.select_waypoints(s, grid, n).indices)
            want, _ = oracles.sequential_maximizer(S, n)
            if got != want:
                mismatches.append((t, n))
    report(6, "planner vs sequential maximizer", not mismatches,
           f"{150 - len(mismatches)}/150 exact sequence matches on 4x4 grids, n in {{2,3,4}}"
           + (f"; mismatches {mismatches[:5]}" if mismatches else ""))


def test_c07_router_quality():
    hits, worst = 0, 1.0
    for t in range(100):
        rng = np.random.default_rng([707, t])
        k = int(rng.integers(1, 9))
        origin, W = rng.uniform(0, 128, 2), rng.uniform(0, 128, (k, 2))
        got = route.route(origin, W).length
        _, best = oracles.exhaustive_route(origin, W)
        hits += got <= best * (1 + 1e-9)
        worst = max(worst, got / best)
    report(7, "router vs exhaustive optimum", worst <= 1.05 and hits >= 90,
           f"worst ratio {worst:.4f} (<= 1.05), optimal in {hits}/100 (>= 90)")


# -- 8-11: end-to-end mission ----------------------------------------------

class Instrument:
    """Records every SOGP outcome and the state right after each re-estimate."""

    def __init__(self, monkeypatch):
        self.outcomes, self.after = [], []
        self.refitting = False
        real_update, real_reest = sogp.update, mission._reestimate

        def update(s, x, y):
            out = real_update(s, x, y)
            # the refit re-streams the BV set; those are not new measurements
            if not self.refitting:
                self.outcomes.append(out)
            return out

        def reestimate(st, cfg):
            self.after.append(dict(sample=st.samples - 1, churn_before=st.churn))
            self.refitting = True
            try:
                real_reest(st, cfg)
            finally:
                self.refitting = False
            self.after[-1].update(rho=st.rho, churn=st.churn)

        monkeypatch.setattr(mission.sogp, "update", update)
        monkeypatch.setattr(mission, "_reestimate", reestimate)


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    out = tmp_path_factory.mktemp("e2e")
    fld = field_io.synth_field(128, 128, 0)
    t0 = time.perf_counter()
    plain = mission.run(fld, H0, E2E)
    runtime = time.perf_counter() - t0
    mission.write_metrics_csv(plain.history, out / "metrics_a.csv")

    mp = pytest.MonkeyPatch()
    try:
        inst = Instrument(mp)
        traced = mission.run(fld, H0, E2E)
    finally:
        mp.undo()
    mission.write_metrics_csv(traced.history, out / "metrics_b.csv")
    return dict(state=plain, runtime=runtime, traced=traced, inst=inst, out=out)


def test_c08_end_to_end_trend(e2e):
    st = e2e["state"]
    h = st.history
    post_prior = h[st.prior_samples - 1].mse
    final = h[-1].mse
    trend = mission.mse_trend(h, window=50)
    b = mission.epoch_boundaries(st)
    first, last = trend[b[0]], trend[b[-1]]
    ok = final < 0.5 * post_prior and last < first and e2e["runtime"] < 300
    report(8, "end-to-end MSE trend", ok,
           f"final MSE {final:.3e} vs 0.5 x post-prior {0.5 * post_prior:.3e}; 50-sample mean "
           f"{first:.3e} at first boundary (sample {b[0]}) -> {last:.3e} at last (sample {b[-1]}); "
           f"{len(st.epochs)} epochs; {e2e['runtime']:.1f} s (< 300 s)")


def test_c09_variance_decay(e2e):
    st = e2e["state"]
    v = [st.history[i].mean_variance for i in mission.epoch_boundaries(st)]
    ok = len(v) >= 2 and all(b < a for a, b in zip(v, v[1:]))
    report(9, "mean variance decreases across epochs", ok,
           "per-epoch mean variance " + ", ".join(f"{x:.3e}" for x in v))


def test_c10_rho_trigger(e2e):
    inst, st = e2e["inst"], e2e["traced"]
    m, rho0 = E2E.bv_capacity, E2E.rho_threshold
    fire_at = {a["sample"] for a in inst.after}
    problems = []
    if len(inst.outcomes) != st.samples:
        problems.append(f"{len(inst.outcomes)} outcomes for {st.samples} samples")
    count = 0
    for i, out in enumerate(inst.outcomes):
        if i < st.prior_samples:
            continue
        count += out.added
        if i in fire_at:
            if not count > rho0 * m:
                problems.append(f"fired at sample {i} after {count} additions")
            count = 0
        elif count > rho0 * m:
            problems.append(f"missed trigger at sample {i} ({count} additions)")
            count = 0
    resets = [a for a in inst.after if a["rho"] != 0.0 or a["churn"] != 0]
    if resets:
        problems.append(f"{len(resets)} re-estimates left rho nonzero")
    counts = [a["churn_before"] for a in inst.after]
    ok = not problems and len(inst.after) >= 1
    report(10, "rho trigger semantics", ok,
           f"{len(inst.after)} re-estimates, additions at each trigger {counts} (> {rho0 * m:g}); "
           f"rho after each = 0" + (f"; problems: {problems[:3]}" if problems else ""))


def test_c11_determinism(e2e):
    a = (e2e["out"] / "metrics_a.csv").read_bytes()
    b = (e2e["out"] / "metrics_b.csv").read_bytes()
    rows = a.count(b"\n") - 1
    report(11, "determinism", a == b,
           f"metrics.csv byte-identical across two runs ({len(a)} bytes, {rows} rows)")
