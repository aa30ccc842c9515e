"""Causal scheduling policies.

These policies see only the current buffer levels and the time left until
the deadline — never future arrivals.  Each arrival is routed to storage
super-capacitor-first (its charge path is lossless); whatever fits in
neither buffer is lost.  Two transmission rules are provided:

* :func:`policy_ideal` — spread the currently drainable energy evenly
  over the remaining horizon, clipped at the peak power.
* :func:`policy_circuit` — apply the optimal one-shot burst rule to the
  current buffers with the epoch itself as the window: burn at the
  efficiency-optimal power when energy is scarce, ramp up to the peak
  when the buffers hold more than the epoch can carry at that power;
  undrained energy stays buffered for later epochs.

:func:`run_online` drives either rule across a timeline and returns the
realized schedule plus a cumulative-throughput trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import CovarianceSet, EffectiveChannels
from .energy import ArrivalSplit, EpochTimeline, HybridStorage
from .offline import Schedule
from .single_epoch import PoTable, solve_single_epoch
from .waterfill import WaterSystem, covariances_for_level

__all__ = [
    "SplitDecision",
    "EpochDecision",
    "OnlineResult",
    "split_arrival",
    "policy_ideal",
    "policy_circuit",
    "run_online",
]


@dataclass(frozen=True)
class SplitDecision:
    """How one arrival was routed: to the super-capacitor, to the battery
    (raw joules, before conversion loss), and the discarded excess."""

    sc: float
    b: float
    discarded: float


def split_arrival(storage: HybridStorage, amount: float) -> SplitDecision:
    """Deposit ``amount`` super-capacitor-first, spilling to the battery.

    Energy beyond both headrooms is discarded (the harvester is simply
    not used).  The storage element is updated in place.
    """
    if amount < 0.0:
        raise ValueError("arrival amount must be nonnegative")
    head_sc, head_b = storage.headroom_raw()
    sc = min(amount, head_sc)
    b = min(amount - sc, head_b)
    discarded = max(amount - sc - b, 0.0)
    storage.deposit(sc, b)
    return SplitDecision(sc=sc, b=b, discarded=discarded)


@dataclass(frozen=True)
class EpochDecision:
    """One epoch's transmission decision and the resulting buffer drains."""

    tau: float
    power: float
    p_sc: float
    p_b: float
    eps_sc: float
    eps_b: float
    d_sc: float
    d_b: float


def _split_drains(
    storage: HybridStorage, tau: float, power: float, eps: float
) -> EpochDecision:
    """Drain the consumed energy super-capacitor-first and attribute powers
    to the buffers in proportion to their share of the consumption."""
    consumed = tau * (power + eps)
    if consumed <= 0.0:
        return EpochDecision(tau, power, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    d_sc = min(storage.level_sc, consumed)
    d_b = min(storage.level_b, consumed - d_sc)
    frac = d_sc / consumed
    return EpochDecision(
        tau=tau,
        power=power,
        p_sc=power * frac,
        p_b=power * (1.0 - frac),
        eps_sc=eps * frac,
        eps_b=eps * (1.0 - frac),
        d_sc=d_sc,
        d_b=d_b,
    )


def policy_ideal(
    storage: HybridStorage, p_peak: float, l: float, remaining: float
) -> EpochDecision:
    """Even spreading: radiate ``drainable / remaining`` (clipped at the
    peak) for the whole epoch."""
    power = min(p_peak, storage.drainable / remaining)
    return _split_drains(storage, l, power, 0.0)


def policy_circuit(
    eff: EffectiveChannels,
    weights,
    storage: HybridStorage,
    p_peak: float,
    eps: float,
    l: float,
    p_o: float | None = None,
) -> EpochDecision:
    """One-shot burst rule applied to the current epoch.

    The window is the epoch itself, so a well-stocked buffer is drained
    aggressively (up to the peak power for the whole epoch) rather than
    rationed against the far deadline; a scarce buffer is burned at the
    efficiency-optimal power for part of the epoch.  Deferring a burn
    never pays here: the throughput per joule is already maximal at that
    power, so holding energy only risks stranding it at the deadline.
    """
    sol = solve_single_epoch(
        eff,
        weights,
        e_sc=storage.level_sc,
        e_b=storage.level_b / storage.eta,
        eta=storage.eta,
        eps=eps,
        p_peak=p_peak,
        t=l,
        p_o=p_o,
    )
    return _split_drains(storage, sol.tau, sol.power, eps if sol.tau > 0.0 else 0.0)


@dataclass(frozen=True)
class OnlineResult:
    """Realized causal schedule, its cumulative-throughput trace (one row
    ``(time, throughput)`` per epoch boundary) and per-arrival discards."""

    schedule: Schedule
    trace: np.ndarray
    discarded: np.ndarray

    @property
    def throughput(self) -> float:
        return self.schedule.objective


def run_online(
    eff: EffectiveChannels,
    weights,
    timeline: EpochTimeline,
    storage: HybridStorage,
    p_peak: float,
    eps=None,
    po_table: PoTable | None = None,
) -> OnlineResult:
    """Run a causal policy over a timeline.

    ``eps=None`` selects the even-spreading rule; a scalar or per-epoch
    array selects the burst rule with that circuit power.  ``po_table``
    optionally supplies precomputed burst powers (useful in sweeps where
    the circuit power varies per epoch).  The caller's storage object is
    not modified.
    """
    if not (p_peak > 0.0 and math.isfinite(p_peak)):
        raise ValueError("p_peak must be positive and finite")
    N = timeline.N
    if eps is None:
        eps_arr = None
    else:
        eps_arr = np.broadcast_to(np.asarray(eps, dtype=float), (N,)).copy()
        if np.any(eps_arr < 0.0):
            raise ValueError("circuit power must be nonnegative")
    store = storage.copy()
    ws = WaterSystem(eff, weights)

    tau = np.zeros(N)
    p_sc = np.zeros(N)
    p_b = np.zeros(N)
    eps_sc = np.zeros(N)
    eps_b = np.zeros(N)
    dep_sc = np.zeros(N)
    dep_b = np.zeros(N)
    discarded = np.zeros(N)
    power = np.zeros(N)
    trace = [(0.0, 0.0)]
    acc: list[float] = []

    for i in range(N):
        split = split_arrival(store, float(timeline.E[i]))
        dep_sc[i], dep_b[i], discarded[i] = split.sc, split.b, split.discarded
        remaining = float(timeline.T - timeline.t[i])
        if eps_arr is None:
            dec = policy_ideal(store, p_peak, float(timeline.l[i]), remaining)
        else:
            p_o = None
            if po_table is not None and eps_arr[i] > 0.0:
                p_o = po_table.lookup(float(eps_arr[i]))[0]
            dec = policy_circuit(
                eff,
                ws.weights,
                store,
                p_peak,
                float(eps_arr[i]),
                float(timeline.l[i]),
                p_o=p_o,
            )
        store.drain(dec.d_sc, dec.d_b)
        tau[i], power[i] = dec.tau, dec.power
        p_sc[i], p_b[i] = dec.p_sc, dec.p_b
        eps_sc[i], eps_b[i] = dec.eps_sc, dec.eps_b
        acc.append(dec.tau * ws.rate_at_power(dec.power))
        trace.append((float(timeline.t[i] + timeline.l[i]), math.fsum(acc)))

    rate = ws.rate_at_power_vec(power)
    covs = []
    for i in range(N):
        if power[i] > 0.0:
            level, _ = ws.level_at_power(float(power[i]))
            covs.append(covariances_for_level(eff, weights, level))
        else:
            covs.append(CovarianceSet.zeros(eff))
    sched = Schedule(
        tau=tau,
        p_sc=p_sc,
        p_b=p_b,
        eps_sc=eps_sc,
        eps_b=eps_b,
        split=ArrivalSplit(sc=dep_sc, b=dep_b),
        covs=tuple(covs),
        power=power,
        rate=rate,
        objective=math.fsum(acc),
    )
    return OnlineResult(schedule=sched, trace=np.asarray(trace), discarded=discarded)
