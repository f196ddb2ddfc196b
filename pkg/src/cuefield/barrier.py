"""Ballot and barrier probabilities for Gaussian walks and near-walk processes.

The barrier event for a process Z over n steps, barrier sequence h and
endpoint window [t, t+1] is

    B_Z(n, t, h) = { Z_i <= h_i, i = 1..n-1;  Z_n in [t, t+1] },

estimated by plain Monte Carlo (probabilities at desk scale stay well above
1e-4, so importance sampling buys nothing).  The ballot orientation
(walk staying above -x, ending in [-x+y, -x+y+1]) has its own estimator whose
normalized value p * n^{3/2} / (x y) is bounded above and below across n.
Comparison checks (Slepian sandwich, separated and overlapping two-ray
bounds) use common random numbers so that barrier shifts order the events
per sample, not just in expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gaussian_field import _ridge_cholesky
from .rng import make_rng

DEFAULT_BATCH = 65_536
_BATCH_ELEMS = 1 << 23  # cap paths * steps per batch (~64 MB of float64)


def _path_batch(batch: int, n: int) -> int:
    return max(1, min(batch, _BATCH_ELEMS // max(n, 1)))


@dataclass(frozen=True)
class MCEstimate:
    """Binomial Monte Carlo estimate with its standard error."""

    probability: float
    std_error: float
    samples: int

    @staticmethod
    def from_counts(hits: int, samples: int) -> "MCEstimate":
        p = hits / samples
        return MCEstimate(p, math.sqrt(p * (1.0 - p) / samples), samples)


@dataclass(frozen=True)
class BarrierProblem:
    """(n, barrier h_1..h_{n-1}, endpoint window [t, t+1], covariance).

    covariance None means the standard Gaussian walk R(i, j) = min(i, j);
    otherwise an explicit n x n positive semidefinite matrix.
    """

    n: int
    barrier: np.ndarray
    t: float
    covariance: np.ndarray | None = None

    def __post_init__(self):
        h = np.asarray(self.barrier, dtype=float).ravel()
        if len(h) != self.n - 1:
            raise ValueError("barrier must have length n - 1")
        object.__setattr__(self, "barrier", h)
        if self.covariance is not None:
            cov = np.asarray(self.covariance, dtype=float)
            if cov.shape != (self.n, self.n):
                raise ValueError("covariance must be n x n")
            object.__setattr__(self, "covariance", cov)

    @property
    def is_walk(self) -> bool:
        return self.covariance is None

    def shifted(self, delta: float) -> "BarrierProblem":
        return BarrierProblem(self.n, self.barrier + delta, self.t, self.covariance)


def walk_covariance(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return np.minimum(i[:, None], i[None, :]).astype(float)


def _hits(paths: np.ndarray, barrier: np.ndarray, t: float) -> np.ndarray:
    ok = np.all(paths[:, :-1] <= barrier[None, :], axis=1) if paths.shape[1] > 1 else True
    end = paths[:, -1]
    return ok & (end >= t) & (end <= t + 1.0)


class _PathSampler:
    """Batch path sampler for a barrier problem, factorized once."""

    def __init__(self, problem: BarrierProblem):
        self.problem = problem
        self._chol = None if problem.is_walk else _ridge_cholesky(problem.covariance)

    def paths(self, rng, batch: int) -> np.ndarray:
        z = rng.standard_normal((batch, self.problem.n))
        if self._chol is None:
            return np.cumsum(z, axis=1)
        return z @ self._chol.T


def barrier_mc(problem: BarrierProblem, samples: int, seed,
               batch: int = DEFAULT_BATCH) -> MCEstimate:
    """Monte Carlo estimate of P(B_Z(n, t, h))."""
    sampler = _PathSampler(problem)
    rng = make_rng(seed)
    step = _path_batch(batch, problem.n)
    hits = 0
    done = 0
    while done < samples:
        b = min(step, samples - done)
        hits += int(np.sum(_hits(sampler.paths(rng, b), problem.barrier, problem.t)))
        done += b
    return MCEstimate.from_counts(hits, samples)


def ballot_mc(n: int, x: float, y: float, samples: int, seed,
              batch: int = DEFAULT_BATCH) -> MCEstimate:
    """P(Y_i >= -x for i <= n, Y_n in [-x+y, -x+y+1]) for the Gaussian walk."""
    if x < 1 or y < 1:
        raise ValueError("ballot estimator expects x, y >= 1")
    rng = make_rng(seed)
    step = _path_batch(batch, n)
    hits = 0
    done = 0
    lo, hi = -x + y, -x + y + 1.0
    while done < samples:
        b = min(step, samples - done)
        paths = np.cumsum(rng.standard_normal((b, n)), axis=1)
        good = np.all(paths >= -x, axis=1)
        end = paths[:, -1]
        hits += int(np.sum(good & (end >= lo) & (end <= hi)))
        done += b
    return MCEstimate.from_counts(hits, samples)


def bridge_reflection(n: float, g: float, s: float) -> float:
    """Exact P(W_u <= g for u <= n, W_n in [s, s+1]) for Brownian motion.

    Reflection principle: integral over [s, s+1] of p_n(x) - p_n(x - 2g),
    written with normal CDF differences.  Needs g > 0 and s < 0.
    """
    if g <= 0 or s >= 0:
        raise ValueError("reflection formula needs g > 0 and s < 0")
    rt = math.sqrt(n)
    plain = ndtr((s + 1.0) / rt) - ndtr(s / rt)
    image = ndtr((s + 1.0 - 2.0 * g) / rt) - ndtr((s - 2.0 * g) / rt)
    return float(plain - image)


def brownian_barrier_mc(n: float, g: float, s: float, steps: int, samples: int,
                        seed, batch: int = DEFAULT_BATCH) -> MCEstimate:
    """Discretized Brownian check of bridge_reflection (oracle for tests)."""
    rng = make_rng(seed)
    dt = n / steps
    step = _path_batch(batch, steps)
    hits = 0
    done = 0
    while done < samples:
        b = min(step, samples - done)
        w = np.cumsum(rng.standard_normal((b, steps)) * math.sqrt(dt), axis=1)
        ok = np.all(w <= g, axis=1)
        end = w[:, -1]
        hits += int(np.sum(ok & (end >= s) & (end <= s + 1.0)))
        done += b
    return MCEstimate.from_counts(hits, samples)


def ratio_stability(n: int, t: float, t2: float, h: float, samples: int, seed) -> float:
    """Ratio p(n, t, h + (log n)^{3/4}) / p(n, t2, h - (log n)^{3/4}) for the walk."""
    shift = math.log(n) ** 0.75
    level = np.full(n - 1, h)
    up = barrier_mc(BarrierProblem(n, level + shift, t), samples, make_rng(seed))
    down = barrier_mc(BarrierProblem(n, level - shift, t2), samples, make_rng(seed))
    if down.probability == 0.0:
        return math.inf
    return up.probability / down.probability


@dataclass(frozen=True)
class SandwichReport:
    """Coupled-MC comparison of a perturbed-covariance barrier probability
    against shift-widened walk probabilities."""

    p_center: MCEstimate
    p_upper: MCEstimate
    p_lower: MCEstimate
    upper_margin: float
    lower_margin: float
    slack: float

    @property
    def holds(self) -> bool:
        return self.upper_margin >= 0.0 and self.lower_margin >= 0.0


def _slack(n: int, eps: float) -> float:
    # reported comparison slack with unit constant
    return math.exp(-math.log(n) ** (1.5 - eps))


def slepian_sandwich_check(problem: BarrierProblem, eps: float, samples: int, seed,
                           batch: int = DEFAULT_BATCH) -> SandwichReport:
    """Check (1-eps) p_Y(h - s) - slack <= p_G(h) <= (1+eps) p_Y(h + s) + slack.

    s = (log n)^{3/4}.  The processes share the same standard normal draws,
    so each side is checked through the per-sample coupled difference with a
    4-standard-error allowance.
    """
    if problem.is_walk:
        raise ValueError("sandwich check expects a custom covariance")
    n = problem.n
    shift = math.log(n) ** 0.75
    chol = _ridge_cholesky(problem.covariance)
    rng = make_rng(seed)

    step = _path_batch(batch, n)
    sums = np.zeros(5)  # hits_g, hits_up, hits_lo, sum d_up, sum d_up^2
    sums_lo = np.zeros(2)
    done = 0
    while done < samples:
        b = min(step, samples - done)
        z = rng.standard_normal((b, n))
        g_paths = z @ chol.T
        y_paths = np.cumsum(z, axis=1)
        ind_g = _hits(g_paths, problem.barrier, problem.t).astype(float)
        ind_up = _hits(y_paths, problem.barrier + shift, problem.t).astype(float)
        ind_lo = _hits(y_paths, problem.barrier - shift, problem.t).astype(float)
        d_up = (1.0 + eps) * ind_up - ind_g
        d_lo = ind_g - (1.0 - eps) * ind_lo
        sums += (ind_g.sum(), ind_up.sum(), ind_lo.sum(), d_up.sum(), (d_up**2).sum())
        sums_lo += (d_lo.sum(), (d_lo**2).sum())
        done += b
    est = [MCEstimate.from_counts(int(c), samples) for c in sums[:3]]
    slack = _slack(n, eps)

    def margin(total: float, total_sq: float) -> float:
        mean = total / samples
        var = max(total_sq / samples - mean**2, 0.0)
        return mean + slack + 4.0 * math.sqrt(var / samples)

    return SandwichReport(
        p_center=est[0],
        p_upper=est[1],
        p_lower=est[2],
        upper_margin=margin(sums[3], sums[4]),
        lower_margin=margin(sums_lo[0], sums_lo[1]),
        slack=slack,
    )


@dataclass(frozen=True)
class TwoRaySpec:
    """Two barrier processes with an anchored overlap at step k.

    The comparison covariance has a common random-walk trunk up to k
    (E Z^(1)_i Z^(2)_j = min(i, j, k)); `cross_perturbation` optionally adds a
    bounded perturbation to the joint covariance of the process under test.
    """

    base: BarrierProblem
    k: int
    anchor: float
    cross_perturbation: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.k < self.base.n:
            raise ValueError("overlap index must satisfy 0 < k < n")

    def joint_covariance(self) -> np.ndarray:
        n = self.base.n
        cov = np.empty((2 * n, 2 * n))
        walk = walk_covariance(n)
        trunk = np.minimum(walk, float(self.k))
        cov[:n, :n] = walk
        cov[n:, n:] = walk
        cov[:n, n:] = trunk
        cov[n:, :n] = trunk
        if self.cross_perturbation is not None:
            pert = np.asarray(self.cross_perturbation, dtype=float)
            if pert.shape != (2 * n, 2 * n):
                raise ValueError("perturbation must be 2n x 2n")
            cov = cov + pert
        return cov


def _two_ray_hits(paths: np.ndarray, spec: TwoRaySpec, barrier: np.ndarray,
                  trim: int = 0) -> np.ndarray:
    n = spec.base.n
    first, second = paths[:, :n], paths[:, n:]
    lo = max(trim, 1)
    hi = min(n - trim, n - 1) if trim else n - 1  # last constrained step
    sl = slice(lo - 1, hi)
    ok = np.ones(len(paths), dtype=bool)
    for leg in (first, second):
        ok &= np.all(leg[:, sl] <= barrier[None, sl], axis=1)
        ok &= (leg[:, -1] >= spec.base.t) & (leg[:, -1] <= spec.base.t + 1.0)
    anchor = first[:, spec.k - 1]
    return ok & (anchor >= spec.anchor) & (anchor <= spec.anchor + 1.0)


def two_ray_mc(spec: TwoRaySpec, samples: int, seed,
               batch: int = DEFAULT_BATCH, trim: int = 0) -> MCEstimate:
    """MC estimate of the anchored joint two-ray barrier probability."""
    chol = _ridge_cholesky(spec.joint_covariance())
    rng = make_rng(seed)
    step = _path_batch(batch, 2 * spec.base.n)
    hits = 0
    done = 0
    while done < samples:
        b = min(step, samples - done)
        paths = rng.standard_normal((b, 2 * spec.base.n)) @ chol.T
        hits += int(np.sum(_two_ray_hits(paths, spec, spec.base.barrier, trim)))
        done += b
    return MCEstimate.from_counts(hits, samples)


@dataclass(frozen=True)
class TwoRayReport:
    p_joint: MCEstimate
    p_bound: float
    bound_se: float
    margin: float
    slack: float

    @property
    def holds(self) -> bool:
        return self.margin >= 0.0


def separated_check(problem: BarrierProblem, cross_cov: np.ndarray, eps: float,
                    samples: int, seed) -> TwoRayReport:
    """Prop-style bound for separated rays: p_joint <= (1+eps) p_Y(h+s)^2 + slack.

    `cross_cov` is the bounded n x n cross-covariance of the two legs.
    """
    n = problem.n
    base_cov = problem.covariance if problem.covariance is not None else walk_covariance(n)
    joint = np.empty((2 * n, 2 * n))
    joint[:n, :n] = base_cov
    joint[n:, n:] = base_cov
    joint[:n, n:] = cross_cov
    joint[n:, :n] = cross_cov.T
    chol = _ridge_cholesky(joint)
    shift = math.log(n) ** 0.75
    rng = make_rng(seed)

    step = _path_batch(DEFAULT_BATCH, 2 * n)
    hits = 0
    done = 0
    while done < samples:
        b = min(step, samples - done)
        paths = rng.standard_normal((b, 2 * n)) @ chol.T
        ok = _hits(paths[:, :n], problem.barrier, problem.t)
        ok &= _hits(paths[:, n:], problem.barrier, problem.t)
        hits += int(np.sum(ok))
        done += b
    p_joint = MCEstimate.from_counts(hits, samples)

    single = barrier_mc(BarrierProblem(n, problem.barrier + shift, problem.t),
                        samples, make_rng(seed))
    bound = (1.0 + eps) * single.probability**2
    bound_se = (1.0 + eps) * 2.0 * single.probability * single.std_error
    slack = _slack(n, eps)
    margin = bound + slack - p_joint.probability \
        + 4.0 * math.sqrt(p_joint.std_error**2 + bound_se**2)
    return TwoRayReport(p_joint=p_joint, p_bound=bound, bound_se=bound_se,
                        margin=margin, slack=slack)


def overlap_check(spec: TwoRaySpec, eps: float, samples: int, seed,
                  trim: int = 4) -> TwoRayReport:
    """Overlapping-ray bound: p_A <= (1+eps) p_{Y-pair}(h + s, trimmed) + slack.

    The comparison pair has the exact common-trunk covariance min(i, j, k);
    its barrier is shifted up by s = (log n)^{3/4} and only enforced on
    steps trim..n-trim (trim constant reported).
    """
    n = spec.base.n
    shift = math.log(n) ** 0.75
    p_joint = two_ray_mc(spec, samples, make_rng(seed))

    clean = TwoRaySpec(base=spec.base, k=spec.k, anchor=spec.anchor)
    chol = _ridge_cholesky(clean.joint_covariance())
    rng = make_rng(seed)
    step = _path_batch(DEFAULT_BATCH, 2 * n)
    hits = 0
    done = 0
    barrier = spec.base.barrier + shift
    while done < samples:
        b = min(step, samples - done)
        paths = rng.standard_normal((b, 2 * n)) @ chol.T
        hits += int(np.sum(_two_ray_hits(paths, clean, barrier, trim)))
        done += b
    p_bound_est = MCEstimate.from_counts(hits, samples)
    bound = (1.0 + eps) * p_bound_est.probability
    bound_se = (1.0 + eps) * p_bound_est.std_error
    slack = _slack(n, eps)
    margin = bound + slack - p_joint.probability \
        + 4.0 * math.sqrt(p_joint.std_error**2 + bound_se**2)
    return TwoRayReport(p_joint=p_joint, p_bound=bound, bound_se=bound_se,
                        margin=margin, slack=slack)
