import json
import math

import numpy as np
import pytest
from scipy import stats

from greedywalk.blocks import (Attempt, Block, BlockReport, audit, block_length,
                               block_start_potentials, bounds, check_block_start,
                               detect_blocks, jstar_and_m, partial_sums, proof_diagnostics,
                               r1_areas, restart_scan, window)
from greedywalk.dynamics import SimConfig, Trajectory, run_walk
from greedywalk.field_oracle import PointField, direct_simulate, extract_drives
from greedywalk.potential import make_initial


def synthetic(S, case="unit", t=None, T=None):
    """Trajectory with given positions, unit times by default."""
    S = np.asarray(S, dtype=float)
    n = S.size
    t = np.arange(n, dtype=float) if t is None else np.asarray(t, dtype=float)
    nan = np.full(n, np.nan)
    side = np.concatenate([[0], np.where(np.diff(S) < 0, -1, 1)]).astype(np.int8)
    T = np.concatenate([[np.nan], np.ones(n - 1)]) if T is None else np.asarray(T)
    return Trajectory(case, 1.0, math.inf, t, S, nan, side, nan, nan, nan, nan, T)


def harmonic_path(n):
    """S_1 = 2 and S_k = S_{k-1} + 1/k: every block meets its bounds, since
    from the standard start N_k = k + 1."""
    S = [0.0, 2.0]
    for k in range(2, n + 1):
        S.append(S[-1] + 1.0 / k)
    return S


# -- lengths and bounds ---------------------------------------------------------------


def test_block_lengths():
    assert block_length(0) == 1
    assert block_length(1) == 13
    assert block_length(16) == 25
    assert block_length(81) == 37
    assert block_length(2) == math.ceil(12 * 2 ** 0.25 + 1)
    with pytest.raises(ValueError):
        block_length(-1)
    assert partial_sums(2) == [0, 13, 13 + block_length(2)]


def test_bounds_examples():
    b = bounds(1, 13.0, 27.0, 0.1)
    assert b.x_lo == pytest.approx(0.4, abs=1e-15)
    assert b.x_hi == pytest.approx(1.1, abs=1e-15)
    assert bounds(0, 0.0, 8.0, 0.1).x_lo == 0.5
    assert bounds(1, 13.0, 27.0, 0.1, jstar=1).m_hi == 42.0
    assert bounds(1, 13.0, 27.0, 0.1, jstar=1).m_lo == 0.0
    assert bounds(2, 13.0, 27.0, 0.1, jstar=1).m_lo == 0.5 * block_length(2)
    for eps in (0.0, 0.5, -0.1):
        with pytest.raises(ValueError):
            bounds(1, 13.0, 27.0, eps)


def test_jstar():
    assert jstar_and_m(math.inf) == (1, 14)
    assert jstar_and_m(1.0) == (2, 30)
    j, m = jstar_and_m(1e-3, "exp")
    sums = partial_sums(j)
    assert sums[j] > 16000 and sums[j - 1] <= 16000 and m == 1 + sums[j]
    with pytest.raises(ValueError):
        jstar_and_m(1.0, "gamma")


# -- detection on synthetic paths ---------------------------------------------------


def test_monotone_path_passes_every_block():
    tr = synthetic(harmonic_path(400))
    rep = detect_blocks(tr, make_initial(), 0.1)
    done = [b for b in rep.blocks if b.success is not None]
    assert rep.failed_j is None and rep.truncated
    assert all(b.success for b in done) and len(done) > 10
    assert all(b.Q == b.ell for b in done[1:])
    assert audit(rep, tr, make_initial()) == []


def test_mirror_path_gets_negative_orientation():
    tr = synthetic(-np.asarray(harmonic_path(100)))
    rep = detect_blocks(tr, make_initial(), 0.1)
    assert rep.sigma == -1 and rep.failed_j is None


def test_two_backtracks_fail_the_block():
    S = harmonic_path(100)
    for k in (4, 8):
        S[k] = S[k - 1] - 1e-3
        for i in range(k + 1, len(S)):
            S[i] = S[i - 1] + 1.0 / i
    rep = detect_blocks(synthetic(S), make_initial(), 0.1)
    assert rep.failed_j == 1 and rep.blocks[1].reason == "two backtracks"
    assert rep.restart_at == 8


def test_single_backtrack_gives_longer_block():
    S = harmonic_path(100)
    S[5] = S[4] - 1e-3
    for i in range(6, len(S)):
        S[i] = S[i - 1] + 1.0 / i
    rep = detect_blocks(synthetic(S), make_initial(), 0.1, max_blocks=1)
    b1 = rep.blocks[1]
    assert b1.success and b1.Q == 14 and b1.backtrack == 5
    assert b1.x_lo <= b1.X <= b1.x_hi


def test_too_slow_block_fails_displacement_bound():
    S = harmonic_path(100)
    for i in range(2, len(S)):
        S[i] = S[i - 1] + 0.01 / i
    rep = detect_blocks(synthetic(S), make_initial(), 0.1)
    assert rep.failed_j == 1 and "X_j" in rep.blocks[1].reason
    assert rep.restart_at == 1 + 13


def test_block_zero_needs_a_long_first_jump():
    rep = detect_blocks(synthetic([0.0, 1.5, 2.0, 2.5]), make_initial(), 0.1)
    assert rep.failed_j == 0 and rep.restart_at == 1


def test_truncated_block_is_left_undecided():
    rep = detect_blocks(synthetic(harmonic_path(20)), make_initial(), 0.1)
    assert rep.truncated and rep.blocks[-1].success is None
    assert rep.blocks[1].success and rep.blocks[2].j == 2


def test_audit_catches_a_doctored_report():
    tr = synthetic(harmonic_path(100))
    rep = detect_blocks(tr, make_initial(), 0.1)
    rep.blocks[2].Q += 1
    assert audit(rep, tr, make_initial())


def test_epsilon_range_enforced():
    with pytest.raises(ValueError):
        detect_blocks(synthetic(harmonic_path(20)), make_initial(), 0.5)


def test_report_json_is_stable_and_finite():
    rep = detect_blocks(synthetic(harmonic_path(100)), make_initial(), 0.1)
    d = json.loads(rep.dumps())
    assert d["sigma"] == 1 and d["eps"] == 0.1
    keys = set(d["blocks"][1])
    assert {"j", "start", "L", "Z", "N", "ell", "Q", "X", "x_lo", "x_hi",
            "success", "reason"} <= keys
    assert d["blocks"][0]["x_hi"] == "inf"


def test_general_case_block_zero_rules():
    jstar, m = jstar_and_m(1.0)
    n = m + 200
    # drift right by about 1/k per customer, unit service and travel 1/k
    S = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, n + 1))])
    S[m] = S[m - 1] + 0.5
    S[m + 1:] = S[m] + np.cumsum(1.0 / np.arange(m + 1, n + 1))
    t = np.concatenate([[0.0], np.cumsum(1.0 + np.diff(S))])
    tr = synthetic(S, "general", t)
    tr.v = 1.0
    rep = detect_blocks(tr, make_initial(), 0.45, v=1.0)
    b0 = rep.blocks[0]
    assert rep.m == m and b0.Q == m and b0.success, b0.reason
    bad = synthetic(S, "general", t, T=np.concatenate([[np.nan], np.full(n, 2.0)]))
    rep = detect_blocks(bad, make_initial(), 0.45, v=1.0)
    assert rep.failed_j == 0 and "T_m" in rep.blocks[0].reason


# -- restarts on simulated runs -----------------------------------------------------


def test_clean_first_attempt_has_no_restarts():
    tr = run_walk(SimConfig(horizon=400, seed=3440))
    sc = restart_scan(tr, make_initial(), 0.45, check=True)
    assert sc.n_star == 0 and sc.restarts.size == 0
    assert sc.final.problems == []


@pytest.mark.parametrize("seed", [1841, 2937])
def test_single_failure_restarts_where_it_became_certain(seed):
    tr = run_walk(SimConfig(horizon=400, seed=seed))
    sc = restart_scan(tr, make_initial(), 0.45, check=True)
    first, last = sc.attempts
    rep = first.report
    assert first.offset == 0 and rep.failed_j >= 1
    assert sc.offsets[1] == rep.restart_at
    blk = rep.blocks[-1]
    if blk.Q is not None:
        assert rep.restart_at == blk.end  # the start of the next block
    assert sc.n_star == last.offset and last.report.failed_j is None
    assert first.problems == [] and last.problems == []


def test_restart_scan_matches_direct_detection_on_windows():
    tr = run_walk(SimConfig(horizon=20_000, seed=5))
    sc = restart_scan(tr, make_initial(), 0.45, keep_potentials=True)
    assert np.all(np.diff(sc.offsets) > 0)
    for att in sc.attempts[:5]:
        sub = window(tr, att.offset)
        rep = detect_blocks(sub, att.u0, 0.45)
        assert [b.success for b in rep.blocks][:len(att.report.blocks)] == \
            [b.success for b in att.report.blocks]


def test_accepted_blocks_pass_audit_and_start_checks():
    for seed in range(6):
        tr = run_walk(SimConfig(horizon=30_000, seed=seed))
        sc = restart_scan(tr, make_initial(), 0.45, keep_potentials=True, check=True)
        for att in sc.attempts:
            assert att.problems == []
            pots = block_start_potentials(att)
            for j, u in pots.items():
                if j >= 1 and att.report.blocks[j - 1].success:
                    chk = check_block_start(att, j, u)
                    assert chk.ok, (seed, att.offset, j, chk)


def test_restart_counts_decay_geometrically():
    counts = []
    for seed in range(60):
        tr = run_walk(SimConfig(horizon=50_000, seed=seed))
        counts.append(len(restart_scan(tr, make_initial(), 0.45).attempts))
    counts = np.array(counts)
    ks = np.arange(1, counts.max() + 1)
    surv = np.array([(counts >= k).mean() for k in ks])
    keep = surv * counts.size >= 5
    slope, _, r, _, _ = stats.linregress(ks[keep], np.log(surv[keep]))
    assert slope < 0 and r ** 2 > 0.8


def test_failure_rate_does_not_grow_with_block_index():
    reached = np.zeros(60)
    failed = np.zeros(60)
    for seed in range(40):
        tr = run_walk(SimConfig(horizon=60_000, seed=seed))
        for att in restart_scan(tr, make_initial(), 0.45, max_blocks=55).attempts:
            for b in att.report.blocks:
                if b.success is not None and b.j < 60:
                    reached[b.j] += 1
                    failed[b.j] += not b.success
    bands = [(5, 15), (16, 30), (31, 50)]
    n = [reached[a:b + 1].sum() for a, b in bands]
    rates = [failed[a:b + 1].sum() / k for (a, b), k in zip(bands, n)]
    se = [math.sqrt(r * (1 - r) / k) for r, k in zip(rates, n)]
    # nonincreasing up to two combined standard errors, and a real drop overall
    for i in range(2):
        assert rates[i + 1] <= rates[i] + 2 * math.hypot(se[i], se[i + 1])
    assert rates[2] < rates[0]


# -- proof events ---------------------------------------------------------------------


def field_run(seed, horizon=3000, eps=0.45):
    cfg = SimConfig(horizon=horizon, seed=seed)
    field = PointField(1.0, seed)
    run = direct_simulate(cfg, field)
    drives, _ = extract_drives(field, run)
    tr = run_walk(cfg, drives)
    return field, restart_scan(tr, make_initial(), eps, keep_potentials=True)


def test_diagnostics_need_a_field():
    _, sc = field_run(0, 600)
    att = sc.attempts[0]
    with pytest.raises(ValueError):
        proof_diagnostics(None, att, 1, block_start_potentials(att)[1])


def test_events_on_real_fields():
    seen_empty = 0
    for seed in range(8):
        field, sc = field_run(seed)
        for att in sc.attempts:
            pots = block_start_potentials(att)
            for blk in att.report.blocks[1:]:
                if blk.success is None:
                    continue
                ev = proof_diagnostics(field, att, blk.j, pots[blk.j])
                assert np.all(np.asarray(ev.increments) > 0)
                if ev.n_R2 == 0:
                    seen_empty += 1
                    assert ev.B1
                if ev.B2 and ev.B3:
                    assert ev.consequence16
                if ev.B1 and ev.B2 and ev.B3:
                    assert ev.success
    assert seen_empty > 0


def hand_built_attempt():
    u0 = make_initial()
    b0 = Block(0, 0, 0.0, 0.0, 1.0, 1, Q=1, X=2.0, x_lo=2.0, x_hi=math.inf, success=True)
    b1 = Block(1, 1, 1.0, 2.0, 2.0, 13)
    rep = BlockReport("unit", 1, 0.1, 1.0, blocks=[b0, b1])
    tr = synthetic([0.0, 2.0])
    return Attempt(0, 0.0, 0.0, rep, tr, u0)


def test_planted_gap_breaks_the_gap_event():
    # twelve close points then one far away: A jumps by 2 * 5 > 13 / 12
    pts = [(2.0 + 0.05 * k, 0.0) for k in range(1, 13)] + [(2.6 + 5.0, 0.0)]
    field = PointField(1.0, 0, planted=pts, sample=False)
    att = hand_built_attempt()
    ev = proof_diagnostics(field, att, 1, make_initial())
    assert not ev.B3 and max(ev.increments) == pytest.approx(10.0)
    assert ev.B1 and ev.n_R2 == 0


def test_area_increments_are_standard_exponential():
    incs = []
    u0 = make_initial()
    for seed in range(5000):
        field = PointField(1.0, seed)
        _, A = r1_areas(field, u0, 0.0, 0.0, 0.5, 3.0, 1 if seed % 2 else -1, 20)
        incs.append(np.diff(np.concatenate([[0.0], A])))
    incs = np.concatenate(incs)
    assert incs.size == 100_000
    assert stats.kstest(incs, "expon").pvalue > 0.01
