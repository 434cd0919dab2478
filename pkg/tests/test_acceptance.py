"""Acceptance criteria. Each test prints one [PASS]/[FAIL] line; the lines are
repeated in the pytest terminal summary under "acceptance criteria".

The 145-bus criterion needs a user-supplied case file named by the
SWITCHSTAB_IEEE145_CASE environment variable and is skipped otherwise.
"""
import json
import os
import time

import numpy as np
import pytest

import switchstab
from switchstab.cli import RunConfig, run
from switchstab.direct_method import ScreeningOptions, find_exit_point, find_mgp, refine_cuep, screen_contingency
from switchstab.dynamics import (DynamicState, coi_project, faulted_network, initial_state, post_switching,
                                 simulate_switching, sustained_fault_trajectory)
from switchstab.equilibria import compute_post_switching_sep, solve_equilibrium, to_relative
from switchstab.network import load_case
from switchstab.powerflow import operating_point

from conftest import STRESSED_LOAD_MW, record
from oracles import (SMIB_M, conservation_drift, gradient_errors, kron_current_error, lossless, random_case,
                     relative_to_coi, richardson_ratio, smib_angles, smib_fault_exit, smib_network, smib_pe,
                     worst_step_increase)

REFERENCE_FINAL = ["Unstable", "Stable", "Unstable", "Stable", "Stable", "Unstable"]
CLOSEST_TARGET = [-0.0579, 0.3856, -0.3121, 0.3271, 2.2868]
PROPOSED_TARGET = {0: -0.0579, 2: -0.3121, 3: 0.3271, 4: 2.3658}
REFERENCE_145_UNSTABLE = {2, 9, 10}


@pytest.fixture(scope="module")
def wscc_run():
    cfg = RunConfig("wscc9", "wscc9", method="all", tds_fallback=True, load_p_mw=STRESSED_LOAD_MW, out="json")
    t0 = time.perf_counter()
    status, text = run(cfg)
    return status, json.loads(text), time.perf_counter() - t0


def test_criterion_1_wscc_classification(wscc_run):
    status, doc, elapsed = wscc_run
    finals = [r["final"] for r in doc["rows"]]
    ok = finals == REFERENCE_FINAL and elapsed < 120
    record("1 WSCC final verdicts match the reference verdicts, runtime < 2 min", ok, f"{finals} in {elapsed:.1f} s")
    assert finals == REFERENCE_FINAL
    assert elapsed < 120
    assert status == 1


def test_criterion_2_wscc_margin_signs(wscc_run):
    _, doc, _ = wscc_run
    rows = doc["rows"]
    closest = [rows[k]["closest"]["margin"] for k in range(5)]
    proposed = {k: rows[k]["proposed"]["margin"] for k in PROPOSED_TARGET}
    closest_ok = all(m is not None for m in closest) and [np.sign(m) for m in closest] == [-1, 1, -1, 1, 1]
    proposed_ok = all(m is not None for m in proposed.values()) and \
        [np.sign(proposed[k]) for k in (0, 2, 3, 4)] == [-1, -1, 1, 1]
    record("2 WSCC margin signs (closest-UEP 1-5, proposed 1,3,4,5)", closest_ok and proposed_ok,
           f"closest={[round(m, 4) for m in closest]} proposed={ {k + 1: round(v, 4) for k, v in proposed.items()} }")
    # magnitudes are reported against the +-50 % band; deviations are recorded, not failing
    for k, (m, target) in enumerate(zip(closest, CLOSEST_TARGET)):
        inside = abs(m - target) <= 0.5 * abs(target)
        print(f"    closest-UEP #{k + 1}: {m:+.4f} vs {target:+.4f} ({'within' if inside else 'outside'} +-50%)")
    for k, target in PROPOSED_TARGET.items():
        m = proposed[k]
        inside = abs(m - target) <= 0.5 * abs(target)
        print(f"    proposed    #{k + 1}: {m:+.4f} vs {target:+.4f} ({'within' if inside else 'outside'} +-50%)")
    assert closest_ok and proposed_ok


def test_criterion_3_failure_paths(wscc_verdicts):
    v2, v6 = wscc_verdicts[1], wscc_verdicts[5]
    ok = v2.reason == "BCUFailed" and v6.reason == "SEPNotFound" and v6.step == 1
    record("3 contingency 2 -> BCUFailed, contingency 6 -> SEPNotFound at step 1", ok,
           f"#2 {v2.reason} (step {v2.step}), #6 {v6.reason} (step {v6.step})")
    assert ok


def test_criterion_4_cuep_matches_closest_uep(wscc_verdicts, wscc_closest):
    details = []
    ok = True
    for k in (0, 2, 3):
        v, c = wscc_verdicts[k], wscc_closest[k]
        dm = abs(v.margin - c.margin)
        dx = float(np.abs(v.cuep.delta - c.closest.delta).max())
        ok &= dm < 1e-9 and dx < 1e-5
        details.append(f"#{k + 1} |dmargin|={dm:.1e} |dx|={dx:.1e}")
    below = wscc_closest[4].margin < wscc_verdicts[4].margin
    ok &= below
    details.append(f"#5 closest {wscc_closest[4].margin:.4f} < proposed {wscc_verdicts[4].margin:.4f}")
    record("4 CUEP equals closest UEP for 1,3,4; closest below proposed for 5", ok, "; ".join(details))
    assert ok


IEEE145 = os.environ.get("SWITCHSTAB_IEEE145_CASE")


@pytest.mark.skipif(not IEEE145, reason="set SWITCHSTAB_IEEE145_CASE to a 145-bus case file")
def test_criterion_5_ieee145_classification():
    t0 = time.perf_counter()
    op = operating_point(load_case(IEEE145))
    events = switchstab.parse_contingencies(switchstab.bundled_text("ieee145_contingencies.json"))
    opts = ScreeningOptions(tds_fallback=True)
    verdicts = [screen_contingency(op, e, opts, i) for i, e in enumerate(events)]
    elapsed = time.perf_counter() - t0
    finals = [v.final for v in verdicts]
    expect = ["Unstable" if k + 1 in REFERENCE_145_UNSTABLE else "Stable" for k in range(len(events))]
    conservative = all(v.tds is None or v.verdict != "Stable" for v in verdicts)
    ok = finals == expect and elapsed < 1800
    record("5 IEEE 145-bus verdicts match the reference verdicts, runtime < 30 min", ok, f"{finals} in {elapsed:.0f} s")
    assert finals == expect and elapsed < 1800 and conservative


# ---------------------------------------------------------------------------
# criterion 6: property suite
# ---------------------------------------------------------------------------

def test_criterion_6a_kron_equivalence():
    rng = np.random.default_rng(20)
    errs = [kron_current_error(random_case(rng, int(rng.integers(3, 8)), int(rng.integers(1, 3))), rng)
            for _ in range(20)]
    ok = max(errs) < 1e-10
    record("6a Kron equivalence on 20 random cases (1e-10)", ok, f"max error {max(errs):.1e}")
    assert ok


@pytest.fixture(scope="module")
def lossless_case(wscc_op, post_net):
    M = wscc_op.case.inertia
    net = lossless(post_net[3], M)
    sep = solve_equilibrium(initial_state(wscc_op).delta, net, M)
    return net, sep, M


def test_criterion_6b_energy_conservation(lossless_case):
    net, sep, M = lossless_case
    x0 = DynamicState(sep.delta + coi_project(np.array([0.5, -0.4, 0.3]), M), coi_project(np.array([0.5, 0, -1]), M))
    drift = conservation_drift(net, sep, M, x0)
    ok = drift < 1e-6
    record("6b lossless undamped energy conserved over 5 s (1e-6)", ok, f"drift {drift:.1e}")
    assert ok


def test_criterion_6c_energy_decrease(lossless_case, wscc_op, wscc_events):
    net, sep, M = lossless_case
    worst = -np.inf
    tol = None
    # post-switching trajectory from the initial point, plus a kicked start
    starts = [initial_state(wscc_op),
              DynamicState(sep.delta + coi_project(np.array([0.7, -0.6, 0.2]), M), coi_project(np.array([1, 0, -1.0]), M))]
    for x0 in starts:
        for lam in (0.05, 0.5):
            w, tol = worst_step_increase(net, sep, M, x0, lam)
            worst = max(worst, w)
    ok = worst <= tol
    record("6c lossless damped energy non-increasing (1e-7 dt per step)", ok, f"max step increase {worst:.1e}")
    assert ok


def test_criterion_6d_gradient_check(lossless_case):
    net, _, M = lossless_case
    rng = np.random.default_rng(50)
    states = [coi_project(rng.uniform(-np.pi, np.pi, 3), M) for _ in range(50)]
    err = gradient_errors(net, M, states).max()
    ok = err < 1e-5
    record("6d grad PE = -f on lossless network at 50 states (1e-5)", ok, f"max rel err {err:.1e}")
    assert ok


def test_criterion_6e_smib_oracles():
    net = smib_network()
    ds, du = smib_angles()
    sep = solve_equilibrium(relative_to_coi(ds + 0.2), net, SMIB_M)
    uep = solve_equilibrium(relative_to_coi(du - 0.2), net, SMIB_M)
    _, sep_f, _, _, _, ex = smib_fault_exit()
    mgp = find_mgp(ex.delta, net, SMIB_M)
    cuep = refine_cuep(mgp, net, SMIB_M, sep_f)
    errs = {
        "sep": abs(to_relative(sep.delta)[0] - ds),
        "uep": abs(to_relative(uep.delta)[0] - du),
        "exit PE": abs(ex.potential - smib_pe(du, ds)),
        "mgp": abs(to_relative(mgp.delta)[0] - du),
        "cuep": abs(to_relative(cuep.delta)[0] - du),
    }
    ok = max(errs.values()) < 1e-3
    record("6e SMIB equilibria, exit point, MGP, CUEP (1e-3)", ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))
    assert ok


def test_criterion_6f_rk4_order(wscc_op, post_net):
    ratio = richardson_ratio(initial_state(wscc_op), post_net[0], wscc_op.case.inertia)
    ok = 12 <= ratio <= 20
    record("6f RK4 Richardson ratio in [12, 20]", ok, f"ratio {ratio:.2f}")
    assert ok


def test_criterion_6g_fault_trajectories_from_sep_and_initial_point(wscc_op, wscc_events):
    event = wscc_events[0]
    case_post, net = post_switching(wscc_op, event)
    M = wscc_op.case.inertia
    sep = compute_post_switching_sep(wscc_op, event, net=net)
    fnet = faulted_network(wscc_op, case_post, 5)
    from_sep = sustained_fault_trajectory(sep.state, fnet, M, 3.0, 1e-3)
    from_init = sustained_fault_trajectory(initial_state(wscc_op), fnet, M, 3.0, 1e-3)
    t_exit = find_exit_point(from_sep, sep, net, M).time
    k = int(np.ceil(t_exit / from_sep.dt)) + 1
    gap = float(np.abs(from_sep.delta[:k] - from_init.delta[:k]).max())
    start_gap = float(np.abs(sep.delta - initial_state(wscc_op).delta).max())
    ok = gap < 0.05
    record("6g contingency 1 / bus 5 fault trajectories from SEP and initial point within 0.05 rad", ok,
           f"max gap {gap:.3f} rad up to exit at {t_exit:.3f} s (starting points already {start_gap:.3f} rad apart)")
    assert ok


def test_criterion_6h_conservativeness(wscc_op, wscc_events):
    suites = [("wscc9", wscc_op, wscc_events)]
    if IEEE145:
        suites.append(("ieee145", operating_point(load_case(IEEE145)),
                       switchstab.parse_contingencies(switchstab.bundled_text("ieee145_contingencies.json"))))
    clashes = []
    checked = 0
    for name, op, events in suites:
        for i, e in enumerate(events):
            v = screen_contingency(op, e, ScreeningOptions(), i)
            if v.verdict == "Stable":
                checked += 1
                _, tds = simulate_switching(op, e)
                if not tds.stable:
                    clashes.append(f"{name}#{i + 1}")
    ok = not clashes
    suffix = "" if IEEE145 else " (145-bus suite skipped: no case file)"
    record("6h no step-7 Stable contradicted by TDS", ok, f"{checked} Stable verdicts checked{suffix}; clashes {clashes}")
    assert ok
