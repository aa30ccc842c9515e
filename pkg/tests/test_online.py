"""Causal policies: arrival routing, per-epoch decisions, full runs."""

import math

import numpy as np
import pytest

from ehsched import (
    HybridStorage,
    build_timeline,
    check_feasibility,
    build_po_table,
    policy_circuit,
    policy_ideal,
    run_online,
    solve_offline_circuit,
    solve_offline_ideal,
    split_arrival,
)

from conftest import draw_problem

E = math.e


# ---------------------------------------------------------------------------
# Arrival routing
# ---------------------------------------------------------------------------


def test_split_arrival_sc_first_then_battery_then_discard():
    storage = HybridStorage(sc_cap=2.0, b_cap=3.0, eta=0.5, level_sc=1.5, level_b=2.0)
    # Headroom: 0.5 J SC, (3-2)/0.5 = 2 J raw battery.
    dec = split_arrival(storage, 4.0)
    assert dec.sc == pytest.approx(0.5)
    assert dec.b == pytest.approx(2.0)
    assert dec.discarded == pytest.approx(1.5)
    assert storage.level_sc == pytest.approx(2.0)
    assert storage.level_b == pytest.approx(3.0)


def test_split_arrival_fits_in_sc():
    storage = HybridStorage(sc_cap=5.0, b_cap=50.0, eta=0.5)
    dec = split_arrival(storage, 3.0)
    assert (dec.sc, dec.b, dec.discarded) == (3.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        split_arrival(storage, -1.0)


# ---------------------------------------------------------------------------
# Per-epoch decisions
# ---------------------------------------------------------------------------


def test_policy_ideal_spreads_and_clips():
    storage = HybridStorage(sc_cap=5.0, b_cap=50.0, eta=0.5, level_sc=4.0, level_b=2.0)
    dec = policy_ideal(storage, p_peak=4.0, l=1.0, remaining=3.0)
    assert dec.power == pytest.approx(2.0)  # 6 J over 3 s
    assert dec.tau == 1.0
    assert dec.d_sc + dec.d_b == pytest.approx(2.0)
    assert dec.d_sc == pytest.approx(2.0)  # SC-first
    clipped = policy_ideal(storage, p_peak=1.5, l=1.0, remaining=3.0)
    assert clipped.power == pytest.approx(1.5)


def test_policy_circuit_scarce_bursts_at_p_o(unit_eff):
    storage = HybridStorage(sc_cap=5.0, b_cap=50.0, eta=0.5, level_sc=1.0)
    dec = policy_circuit(unit_eff, None, storage, p_peak=4.0, eps=1.0, l=2.0)
    assert dec.power == pytest.approx(E - 1.0, abs=1e-6)
    assert dec.tau == pytest.approx(1.0 / E, rel=1e-6)
    assert dec.d_sc == pytest.approx(1.0, rel=1e-9)
    assert dec.d_b == 0.0
    assert dec.eps_sc == pytest.approx(1.0)


def test_policy_circuit_abundant_runs_at_peak(unit_eff):
    storage = HybridStorage(sc_cap=5.0, b_cap=50.0, eta=0.5, level_sc=5.0, level_b=20.0)
    dec = policy_circuit(unit_eff, None, storage, p_peak=4.0, eps=1.0, l=1.0)
    assert dec.power == pytest.approx(4.0)
    assert dec.tau == pytest.approx(1.0)
    # 5 J consumed in the epoch, SC-first.
    assert dec.d_sc == pytest.approx(5.0)
    assert dec.d_b == pytest.approx(0.0)


def test_policy_circuit_empty_store_is_silent(unit_eff):
    storage = HybridStorage(sc_cap=5.0, b_cap=50.0, eta=0.5)
    dec = policy_circuit(unit_eff, None, storage, p_peak=4.0, eps=1.0, l=1.0)
    assert dec.tau == 0.0 and dec.power == 0.0 and dec.eps_sc == 0.0


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------


def _profile():
    return build_timeline(
        [(0.0, 4.0), (2.0, 7.0), (3.0, 3.0), (5.0, 5.0), (8.0, 1.0), (9.0, 8.0)],
        T=10.0,
    )


def test_run_online_ideal_trace_and_accounting(unit_eff):
    tl = _profile()
    storage = HybridStorage(sc_cap=5.0, b_cap=100.0, eta=0.5)
    res = run_online(unit_eff, None, tl, storage, p_peak=4.0)
    # The caller's storage element is untouched.
    assert storage.level_sc == 0.0 and storage.level_b == 0.0
    assert res.trace.shape == (tl.N + 1, 2)
    assert tuple(res.trace[0]) == (0.0, 0.0)
    assert res.trace[-1][0] == pytest.approx(tl.T)
    assert res.trace[-1][1] == pytest.approx(res.throughput)
    assert np.all(np.diff(res.trace[:, 1]) >= -1e-12)
    sched = res.schedule
    assert res.throughput == pytest.approx(
        math.fsum(sched.tau * sched.rate), rel=1e-12
    )
    rep = check_feasibility(tl, sched.split, sched, storage, p_peak=4.0)
    assert rep.feasible, rep.worst()


def test_run_online_circuit_feasible_and_consistent(unit_eff):
    tl = _profile()
    storage = HybridStorage(sc_cap=5.0, b_cap=100.0, eta=0.6)
    res = run_online(unit_eff, None, tl, storage, p_peak=4.0, eps=1.0)
    sched = res.schedule
    rep = check_feasibility(tl, sched.split, sched, storage, p_peak=4.0)
    assert rep.feasible, rep.worst()
    on = sched.tau > 1e-12
    # While transmitting, the burst rule never goes below the
    # efficiency-optimal power (e - 1 for this channel) nor above the peak.
    assert np.all(sched.power[on] >= E - 1.0 - 1e-6)
    assert np.all(sched.power[on] <= 4.0 + 1e-12)
    assert np.all(sched.eps_sc[on] + sched.eps_b[on] == pytest.approx(1.0))
    assert np.all(sched.eps_sc[~on] + sched.eps_b[~on] == 0.0)


def test_run_online_po_table_matches_direct(unit_eff):
    tl = _profile()
    storage = HybridStorage(sc_cap=5.0, b_cap=100.0, eta=0.6)
    direct = run_online(unit_eff, None, tl, storage, p_peak=4.0, eps=1.0)
    table = build_po_table(unit_eff, None, [0.5, 1.0, 2.0])
    via_table = run_online(
        unit_eff, None, tl, storage, p_peak=4.0, eps=1.0, po_table=table
    )
    assert via_table.throughput == pytest.approx(direct.throughput, rel=1e-6)
    np.testing.assert_allclose(via_table.schedule.tau, direct.schedule.tau, atol=1e-6)


def test_run_online_discards_when_storage_is_tiny(unit_eff):
    tl = build_timeline([(0.0, 10.0), (1.0, 10.0)], T=2.0)
    storage = HybridStorage(sc_cap=1.0, b_cap=1.2, eta=0.5)
    res = run_online(unit_eff, None, tl, storage, p_peak=4.0)
    assert np.all(res.discarded >= 0.0)
    assert res.discarded.sum() > 0.0
    rep = check_feasibility(tl, res.schedule.split, res.schedule, storage, p_peak=4.0)
    assert rep.feasible, rep.worst()


def test_run_online_validation(unit_eff):
    tl = _profile()
    storage = HybridStorage(sc_cap=5.0, b_cap=100.0, eta=0.5)
    with pytest.raises(ValueError, match="p_peak"):
        run_online(unit_eff, None, tl, storage, p_peak=0.0)
    with pytest.raises(ValueError, match="circuit power"):
        run_online(unit_eff, None, tl, storage, p_peak=4.0, eps=-1.0)


def test_run_online_per_epoch_eps_array(unit_eff):
    tl = build_timeline([(0.0, 3.0), (1.0, 3.0)], T=2.0)
    storage = HybridStorage(sc_cap=5.0, b_cap=100.0, eta=0.5)
    eps = [0.5, 2.0]
    res = run_online(unit_eff, None, tl, storage, p_peak=4.0, eps=eps)
    on = res.schedule.tau > 1e-12
    total_eps = res.schedule.eps_sc + res.schedule.eps_b
    np.testing.assert_allclose(total_eps[on], np.asarray(eps)[on])


def test_online_never_beats_offline(unit_eff):
    rng = np.random.Generator(np.random.Philox(key=64128))
    for circuit in (False, True):
        done = 0
        while done < 4:
            _eff, tl, storage, p_peak, eps = draw_problem(rng, circuit=circuit)
            big = HybridStorage(sc_cap=storage.sc_cap, b_cap=200.0, eta=storage.eta)
            if circuit:
                off = solve_offline_circuit(unit_eff, None, tl, big, p_peak, eps)
                on = run_online(unit_eff, None, tl, big, p_peak, eps=eps)
            else:
                off = solve_offline_ideal(unit_eff, None, tl, big, p_peak)
                on = run_online(unit_eff, None, tl, big, p_peak)
            assert on.throughput <= off.objective + 1e-6 * max(1.0, off.objective)
            done += 1
