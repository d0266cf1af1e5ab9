"""Detection-theoretic covertness analysis at the warden.

The warden runs an energy detector over a block of samples whose per-sample
received power is eta0 under the sensing-only hypothesis and eta1 when
communication is active.  Everything here reduces to the pair (eta0, eta1)
and the block length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import brentq


@dataclass(frozen=True)
class DetectionSetup:
    """Hypothesis powers seen by the warden and the detector block length."""

    eta0: float          # received power without communication
    eta1: float          # received power with communication
    num_samples: int     # block length M

    def __post_init__(self):
        if not (self.eta0 > 0 and self.eta1 > 0):
            raise ValueError(f"hypothesis powers must be positive, got "
                             f"({self.eta0!r}, {self.eta1!r})")
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be >= 1, got {self.num_samples!r}")


@dataclass
class DetectionEstimate:
    """Monte-Carlo estimate of the detection-error probability."""

    dep: float
    stderr: float
    false_alarm: float
    miss: float
    trials: int
    threshold: float


def kl_divergence(setup: DetectionSetup) -> float:
    """KL divergence between the two block distributions; zero iff eta1 == eta0."""
    ratio = setup.eta1 / setup.eta0
    return setup.num_samples * (math.log(ratio) + 1.0 / ratio - 1.0)


def solve_kappa(epsilon: float, num_samples: int, *, per_sample: bool = True) -> float:
    """Power-ratio cap equivalent to the KL covertness budget 2*epsilon^2.

    Solves log(kappa) + 1/kappa - 1 = rhs for kappa >= 1, where rhs divides
    the budget by the block length when ``per_sample`` is set (the default;
    the block-KL expression carries the factor M) and uses the raw budget
    otherwise.  Both behaviors are exposed because the two conventions
    circulate; they coincide at M = 1.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon!r}")
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples!r}")
    rhs = 2.0 * epsilon ** 2
    if per_sample:
        rhs /= num_samples
    if rhs == 0.0:
        return 1.0

    def f(k):
        return math.log(k) + 1.0 / k - 1.0 - rhs

    hi = 1.0 + math.sqrt(2.0 * rhs) + rhs
    while f(hi) < 0.0:
        hi *= 2.0
    kappa = brentq(f, 1.0, hi, xtol=1e-30, rtol=8.881784197001252e-16)
    # one Newton polish; f'(k) = (k-1)/k^2
    slope = (kappa - 1.0) / kappa ** 2
    if slope > 0.0:
        step = f(kappa) / slope
        if abs(step) < abs(kappa - 1.0):
            polished = kappa - step
            if abs(f(polished)) < abs(f(kappa)):
                kappa = polished
    return kappa


def optimal_threshold(setup: DetectionSetup) -> float:
    """Energy threshold minimizing miss plus false alarm for the block test."""
    if setup.eta1 < setup.eta0:
        raise ValueError(f"eta1 {setup.eta1!r} below eta0 {setup.eta0!r}")
    if setup.eta1 == setup.eta0:
        raise ValueError("hypotheses indistinguishable: eta1 == eta0, any "
                         "threshold gives error probability 1")
    e0, e1, m = setup.eta0, setup.eta1, setup.num_samples
    return m * e0 * e1 / (e1 - e0) * math.log(e1 / e0)


def min_dep_exact(setup: DetectionSetup) -> float:
    """Minimum miss-plus-false-alarm probability of the energy detector.

    The block energy is Gamma(M, eta_i)-distributed under hypothesis i, so
    the optimum is expressed through the regularized lower incomplete gamma
    function at the crossover threshold.
    """
    if setup.eta1 < setup.eta0:
        raise ValueError(f"eta1 {setup.eta1!r} below eta0 {setup.eta0!r}")
    if setup.eta1 == setup.eta0:
        return 1.0
    thr = optimal_threshold(setup)
    m = setup.num_samples
    p_fa = 1.0 - special.gammainc(m, thr / setup.eta0)
    p_md = special.gammainc(m, thr / setup.eta1)
    return float(p_fa + p_md)


def dep_pinsker_bound(kl: float) -> float:
    """Lower bound on the detection-error probability from the KL divergence.

    May go negative for large divergence; callers clamp if they need to.
    """
    return 1.0 - math.sqrt(kl / 2.0)


def simulate_detection(setup: DetectionSetup, trials: int,
                       seed: int = 0) -> DetectionEstimate:
    """Monte-Carlo estimate of the optimal-threshold detection error.

    Draws block energies as sums of squared circularly-symmetric samples
    (chunked to bound memory), which keeps the simulation independent of the
    closed-form gamma-tail route it is used to cross-check.
    """
    if setup.eta1 == setup.eta0:
        threshold = setup.num_samples * setup.eta0
    else:
        threshold = optimal_threshold(setup)
    rng = np.random.default_rng(seed)
    m = setup.num_samples
    fa = miss = 0
    chunk = max(1, min(trials, 2_000_000 // max(m, 1)))
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        z = rng.standard_normal(size=(n, m, 2))
        energy0 = 0.5 * setup.eta0 * np.sum(z[:, :, 0] ** 2 + z[:, :, 1] ** 2, axis=1)
        z = rng.standard_normal(size=(n, m, 2))
        energy1 = 0.5 * setup.eta1 * np.sum(z[:, :, 0] ** 2 + z[:, :, 1] ** 2, axis=1)
        fa += int(np.count_nonzero(energy0 > threshold))
        miss += int(np.count_nonzero(energy1 <= threshold))
        done += n
    p_fa = fa / trials
    p_md = miss / trials
    stderr = math.sqrt(p_fa * (1.0 - p_fa) / trials + p_md * (1.0 - p_md) / trials)
    return DetectionEstimate(dep=p_fa + p_md, stderr=stderr, false_alarm=p_fa,
                             miss=p_md, trials=trials, threshold=threshold)
