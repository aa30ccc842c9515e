"""Weighted water-filling over the parallel channels of the ZF-DPC cascade.

With L_k L_k^H = U_k diag(lam) U_k^H, the rate-optimal covariances for a
water level Delta are

    Phi_k = L_k^{-1} U_k diag((gamma_k*lam/Delta - 1)^+) U_k^H L_k^{-H}

carrying sum power P(Delta) = sum_k sum_lam (gamma_k/Delta - 1/lam)^+.
P(Delta) is continuous and strictly decreasing wherever positive, so the
level for a power budget is found by bisection.  The same quantities are
also available through an exact breakpoint scan over the sorted
thresholds gamma_k*lam (used by hot loops; both routes agree to the
bisection tolerance).  Rates are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import CovarianceSet, EffectiveChannels

# |P(Delta) - budget| <= BUDGET_RTOL * max(1, budget) stops the bisection.
BUDGET_RTOL = 1e-9
BISECT_MAX_ITER = 200


def _weights(eff: EffectiveChannels, weights) -> np.ndarray:
    w = eff.gammas if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (eff.num_users,):
        raise ValueError("one positive weight per user is required")
    if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    return w


class WaterSystem:
    """Flattened eigenmodes with prefix sums for O(modes) exact queries."""

    def __init__(self, eff: EffectiveChannels, weights=None):
        w = _weights(eff, weights)
        self.eff = eff
        self.weights = w
        modes = []  # (threshold, gamma, 1/lam, user, mode index)
        for k, (gamma, lam) in enumerate(zip(w, eff.lam)):
            for j, lv in enumerate(lam):
                modes.append((float(gamma * lv), float(gamma), 1.0 / float(lv), k, j))
        modes.sort(key=lambda m: (-m[0], m[3], m[4]))
        self.modes = modes
        self.thr = [m[0] for m in modes] + [0.0]
        cg, cil, cgl = [0.0], [0.0], [0.0]
        for thr_m, gamma, invlam, _, _ in modes:
            cg.append(cg[-1] + gamma)
            cil.append(cil[-1] + invlam)
            cgl.append(cgl[-1] + gamma * math.log(thr_m))
        self.cg, self.cil, self.cgl = cg, cil, cgl
        self.level_max = self.thr[0]
        # Array copies for the vectorized paths.
        self._thr = np.array(self.thr)
        self._cg = np.array(cg)
        self._cil = np.array(cil)
        self._cgl = np.array(cgl)

    def power_at_level(self, level: float) -> float:
        if level <= 0.0:
            raise ValueError("water level must be positive")
        m = 0
        while m < len(self.modes) and self.thr[m] > level:
            m += 1
        return self.cg[m] / level - self.cil[m] if m else 0.0

    def level_at_power(self, power: float) -> tuple[float, int]:
        """Exact water level and active mode count for a sum-power budget."""
        if power <= 0.0:
            return self.level_max, 0
        for m in range(1, len(self.modes) + 1):
            level = self.cg[m] / (power + self.cil[m])
            if level >= self.thr[m]:
                return level, m
        # Fallback for rounding at the last breakpoint.
        m = len(self.modes)
        return self.cg[m] / (power + self.cil[m]), m

    def rate_at_power(self, power: float) -> float:
        if power <= 0.0:
            return 0.0
        level, m = self.level_at_power(power)
        return self.cgl[m] - math.log(level) * self.cg[m]

    def marginal_rate(self, power: float) -> float:
        """dW/dP, the water level itself (finite at P=0)."""
        return self.level_at_power(power)[0]

    def level_at_power_vec(self, power: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``level_at_power`` over an array of sum powers."""
        p = np.asarray(power, dtype=float).ravel()
        cand = self._cg[1:, None] / (p[None, :] + self._cil[1:, None])
        valid = cand >= self._thr[1:, None]
        idx = np.argmax(valid, axis=0)  # the last row is always valid
        level = cand[idx, np.arange(p.size)]
        m = idx + 1
        off = p <= 0.0
        level = np.where(off, self.level_max, level)
        m = np.where(off, 0, m)
        return level.reshape(np.shape(power)), m.reshape(np.shape(power))

    def rate_at_power_vec(self, power: np.ndarray) -> np.ndarray:
        """Vectorized ``rate_at_power``."""
        level, m = self.level_at_power_vec(power)
        rate = self._cgl[m] - np.log(level) * self._cg[m]
        return np.where(np.asarray(power, dtype=float) <= 0.0, 0.0, rate)

    def curvature_vec(self, power: np.ndarray) -> np.ndarray:
        """Vectorized ``curvature``; zero where no mode is active."""
        level, m = self.level_at_power_vec(power)
        cg = np.where(m > 0, self._cg[m], 1.0)
        return np.where(m > 0, -(level * level) / cg, 0.0)

    def curvature(self, power: float) -> float:
        """d^2W/dP^2 = -Delta^2 / (sum of active gammas); 0 at P=0."""
        level, m = self.level_at_power(power)
        if m == 0:
            return 0.0
        return -(level * level) / self.cg[m]


def sum_power_for_level(eff: EffectiveChannels, weights, level: float) -> float:
    """P(Delta) = sum_k sum_lam (gamma_k/Delta - 1/lam)^+."""
    return WaterSystem(eff, weights).power_at_level(level)


def covariances_for_level(eff: EffectiveChannels, weights, level: float) -> CovarianceSet:
    """Closed-form covariances for a water level (positive part applied)."""
    if level <= 0.0:
        raise ValueError("water level must be positive")
    w = _weights(eff, weights)
    Phi = []
    for gamma, L, lam_sorted in zip(w, eff.L, eff.lam):
        G = L @ L.conj().T
        lam, U = np.linalg.eigh(G)
        d = np.maximum(gamma * lam / level - 1.0, 0.0)
        X = np.linalg.solve(L, U)
        P = (X * d) @ X.conj().T
        Phi.append(0.5 * (P + P.conj().T))
    return CovarianceSet(tuple(Phi))


def level_for_budget(eff: EffectiveChannels, weights, budget: float) -> float:
    """Invert P(Delta) = budget by bisection.

    The upper bracket max_k gamma_k*lam_max carries zero power; the lower
    bracket is halved until it covers the budget.  Terminates when the
    bracket's power mismatch is within BUDGET_RTOL*max(1, budget).
    """
    sys = WaterSystem(eff, weights)
    if budget < 0.0 or not np.isfinite(budget):
        raise ValueError("power budget must be non-negative and finite")
    hi = sys.level_max
    if budget == 0.0:
        return hi
    lo = hi
    while sys.power_at_level(lo) < budget:
        lo *= 0.5
        if lo < 1e-300:
            raise ValueError("power budget is out of reach")
    tol = BUDGET_RTOL * max(1.0, budget)
    mid = lo
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        p = sys.power_at_level(mid)
        if abs(p - budget) <= tol:
            return mid
        if p > budget:
            lo = mid
        else:
            hi = mid
    return mid


def rate_at_power(eff: EffectiveChannels, weights, power: float) -> float:
    """W(P): the weighted sum rate of the water-filling allocation at P."""
    return WaterSystem(eff, weights).rate_at_power(power)


@dataclass(frozen=True)
class WaterLevelSolution:
    """Water level, its covariances, and the realized power and rate."""

    level: float
    power: float
    rate: float
    covs: CovarianceSet


def solve_budget(eff: EffectiveChannels, weights, budget: float) -> WaterLevelSolution:
    """Full water-filling solution (level, covariances, rate) for a budget."""
    sys = WaterSystem(eff, weights)
    if budget <= 0.0:
        zero = CovarianceSet(tuple(np.zeros_like(L) for L in eff.L))
        return WaterLevelSolution(sys.level_max, 0.0, 0.0, zero)
    level, _ = sys.level_at_power(budget)
    covs = covariances_for_level(eff, sys.weights, level)
    return WaterLevelSolution(level, budget, sys.rate_at_power(budget), covs)
