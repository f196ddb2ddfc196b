"""The log-correlated Gaussian field on the unit disk.

A centered Gaussian field with covariance

    cov(z, y) = -log|1 - z*conj(y)| / 2,

pinned to zero at the origin.  Equivalent hyperbolic forms:

    Var(G(z) - G(y))  = log cosh(d(z, y)/2)
    cov(z, y)         = (1/2) log( cosh(d(0,z)/2) cosh(d(0,y)/2) / cosh(d(z,y)/2) )

Exponential tilts e^{B} with B = sum_z 2F(z) - sum_y 2F(y) have closed-form
moments and shift the field mean by mu(c) = sum_z 2cov(z,c) - sum_y 2cov(y,c);
both are provided here together with two exact samplers (dense Cholesky
factorization, and a truncated Fourier-chaos sampler for circle grids).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import check_disk, hyp_dist
from .rng import make_rng

# Escalating jitter for near-singular covariance factorizations (clustered
# points); the kernel itself is smooth but ill-conditioned in that regime.
RIDGES = (0.0, 1e-14, 1e-12, 1e-10)

MIN_SEPARATION = 1e-9


class FactorizationError(RuntimeError):
    """Covariance factorization failed at every ridge level."""


class MomentOverflowError(ArithmeticError):
    """A pairwise factor of a closed-form moment underflowed."""


class MissingAnchorError(KeyError):
    """A restricted-field transform needs an anchor value not in the sample."""


def cov_kernel(z, y):
    """Covariance -log|1 - z*conj(y)|/2; zero when either point is 0."""
    z = check_disk(z)
    y = check_disk(y)
    return -0.5 * np.log(np.abs(1.0 - z * np.conj(y)))


def cov_hyperbolic(z, y):
    """Covariance via hyperbolic distances; identical to cov_kernel."""
    num = _log_cosh_half(hyp_dist(0.0, z)) + _log_cosh_half(hyp_dist(0.0, y))
    return 0.5 * (num - _log_cosh_half(hyp_dist(z, y)))


def var_diff(z, y):
    """Var(G(z) - G(y)) = log cosh(d(z, y)/2)."""
    return _log_cosh_half(hyp_dist(z, y))


def _log_cosh_half(d):
    d = np.asarray(d, dtype=float)
    # log cosh(d/2), overflow-safe for large d
    return d / 2.0 + np.log1p(np.exp(-d)) - math.log(2.0)


@dataclass(frozen=True)
class BiasSpec:
    """Point sets of an exponential tilt B(F) = sum_plus 2F - sum_minus 2F.

    `lam` scales the whole tilt (the closed-form Toeplitz identities require
    lam = 1; the Gaussian calculus works for any lam).
    """

    plus: tuple = ()
    minus: tuple = ()
    lam: float = 1.0
    min_separation: float = field(default=MIN_SEPARATION, repr=False)

    def __post_init__(self):
        plus = tuple(complex(z) for z in self.plus)
        minus = tuple(complex(y) for y in self.minus)
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)
        for z in plus + minus:
            check_disk(z, "bias point")
        if len(minus) > len(plus):
            raise ValueError("bias needs |minus| <= |plus|")
        pts = plus + minus
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if hyp_dist(pts[i], pts[j]) < self.min_separation:
                    raise ValueError(
                        f"bias points {pts[i]} and {pts[j]} closer than the "
                        f"separation floor {self.min_separation}"
                    )

    @property
    def degree(self) -> int:
        return len(self.plus)


def bias_mean(bias: BiasSpec, zeta):
    """Mean shift mu at zeta induced by tilting the field law with e^{lam*B}."""
    zeta = np.asarray(zeta, dtype=complex)
    mu = np.zeros(zeta.shape, dtype=float)
    for z in bias.plus:
        mu += 2.0 * cov_kernel(z, zeta)
    for y in bias.minus:
        mu -= 2.0 * cov_kernel(y, zeta)
    out = bias.lam * mu
    return out if out.ndim else float(out)


def log_exp_moment_gaussian(bias: BiasSpec) -> float:
    """log E e^{lam*B(G)} = lam^2 Var(B)/2, accumulated as a sum of log factors."""
    terms = []
    for group, sign in ((bias.plus, 1.0), (bias.minus, 1.0)):
        for z in group:
            for w in group:
                f = abs(1.0 - z * np.conj(w))
                if f == 0.0:
                    raise MomentOverflowError("pairwise factor |1 - z*conj(w)| underflowed")
                terms.append(-sign * math.log(f))
    for z in bias.plus:
        for y in bias.minus:
            f = abs(1.0 - z * np.conj(y))
            if f == 0.0:
                raise MomentOverflowError("pairwise factor |1 - z*conj(y)| underflowed")
            terms.append(2.0 * math.log(f))
    return bias.lam**2 * math.fsum(terms)


def exp_moment_gaussian(bias: BiasSpec) -> float:
    """E e^{lam*B(G)}; for lam=1 this is the Cauchy-type product formula.

    Always >= 1 (Jensen: B is centered).
    """
    logval = log_exp_moment_gaussian(bias)
    if logval > 700.0:
        raise MomentOverflowError(f"moment magnitude e^{logval:.1f} overflows")
    return math.exp(logval)


def covariance_matrix(points) -> np.ndarray:
    """Dense kernel covariance matrix for a finite point set."""
    pts = np.asarray(points, dtype=complex).ravel()
    check_disk(pts, "points")
    return np.asarray(cov_kernel(pts[:, None], pts[None, :]), dtype=float)


@dataclass(frozen=True)
class FieldSample:
    """Field values (nats) at a finite point set; origin values are exactly 0."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.points) != len(self.values):
            raise ValueError("points and values length mismatch")

    def value_at(self, point, tol: float = 1e-12) -> float:
        d = np.abs(self.points - complex(point))
        i = int(np.argmin(d))
        if d[i] > tol:
            raise MissingAnchorError(f"no sampled point within {tol} of {point}")
        return float(self.values[i])


class CholeskySampler:
    """Exact joint sampler for the kernel at a fixed point set.

    Factors the covariance once (ridge-escalated Cholesky) and reuses the
    factor across draws.  Any origin points bypass the factorization and get
    the deterministic value 0.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=complex).ravel()
        check_disk(pts, "points")
        if len(np.unique(pts)) != len(pts):
            raise ValueError("sample points must be distinct")
        self.points = pts
        self._interior = np.abs(pts) > 0.0
        cov = covariance_matrix(pts[self._interior])
        self._chol = _ridge_cholesky(cov)

    def sample(self, n: int, rng) -> np.ndarray:
        """n independent joint draws, shape (n, len(points))."""
        rng = make_rng(rng)
        k = int(self._interior.sum())
        out = np.zeros((n, len(self.points)))
        if k:
            out[:, self._interior] = rng.standard_normal((n, k)) @ self._chol.T
        return out


def _ridge_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular-like factor L with L L^T = cov.

    Cholesky with escalating ridge; genuinely rank-deficient but PSD
    matrices (e.g. processes sharing a common trunk) fall back to an
    eigendecomposition with tiny negative eigenvalues clipped.
    """
    scale = max(float(np.max(np.abs(cov))), 1.0)
    tried = []
    for ridge in RIDGES:
        try:
            return np.linalg.cholesky(cov + ridge * scale * np.eye(len(cov)))
        except np.linalg.LinAlgError:
            tried.append(ridge)
    evals, vecs = np.linalg.eigh(cov)
    if evals.min() < -1e-8 * scale:
        raise FactorizationError(
            f"covariance indefinite (min eigenvalue {evals.min():.3e}) "
            f"after ridges {tried}"
        )
    return vecs * np.sqrt(np.clip(evals, 0.0, None))


def sample_field(points, seed) -> FieldSample:
    """One exact joint draw of the field at `points` (deterministic in seed)."""
    sampler = CholeskySampler(points)
    values = sampler.sample(1, make_rng(seed))[0]
    return FieldSample(points=sampler.points, values=values)


def circle_truncation(radius: float, tol: float = 1e-12) -> int:
    """Smallest chaos order whose geometric covariance tail is below tol."""
    if not 0.0 < radius < 1.0:
        raise ValueError("radius must be in (0, 1)")
    k = math.ceil(math.log(1.0 / tol) / (2.0 * math.log(1.0 / radius)))
    return max(int(k), 1)


def circle_tail_bound(radius: float, truncation: int) -> float:
    """Upper bound on the covariance error of the order-K chaos sampler."""
    r2 = radius * radius
    return r2 ** (truncation + 1) / (2.0 * (truncation + 1) * (1.0 - r2))


class CircleSampler:
    """Truncated Fourier-chaos sampler on a uniform circle grid.

    G(z) is realized as sum_{k<=K} Re(z^k g_k)/sqrt(2k) with independent
    standard complex Gaussians g_k, which reproduces the kernel covariance up
    to the geometric tail of the log series.  Values at the grid points
    radius*e^{2*pi*i*j/M} come from a single FFT per draw.
    """

    def __init__(self, radius: float, grid_m: int, truncation: int | None = None,
                 tol: float = 1e-12):
        if not 0.0 < radius < 1.0:
            raise ValueError("radius must be in (0, 1)")
        if grid_m < 1:
            raise ValueError("grid size must be positive")
        needed = circle_truncation(radius, tol)
        if truncation is None:
            truncation = needed
        elif truncation < 1:
            raise ValueError("truncation must be >= 1")
        elif circle_tail_bound(radius, truncation) > tol:
            raise ValueError(
                f"truncation {truncation} leaves covariance tail "
                f"{circle_tail_bound(radius, truncation):.3e} > tol {tol:.3e}"
            )
        self.radius = float(radius)
        self.grid_m = int(grid_m)
        self.truncation = int(truncation)
        k = np.arange(1, self.truncation + 1)
        self._amp = self.radius**k / np.sqrt(2.0 * k)
        self._fold = k % self.grid_m

    @property
    def points(self) -> np.ndarray:
        j = np.arange(self.grid_m)
        return self.radius * np.exp(2j * np.pi * j / self.grid_m)

    def sample(self, n: int, rng) -> np.ndarray:
        """n independent draws on the grid, shape (n, grid_m)."""
        rng = make_rng(rng)
        g = rng.standard_normal((n, self.truncation)) + 1j * rng.standard_normal(
            (n, self.truncation)
        )
        coef = np.zeros((n, self.grid_m), dtype=complex)
        np.add.at(coef, (slice(None), self._fold), self._amp * g)
        # sum_k c_k e^{+2 pi i jk/M} = M * ifft(c)
        return np.fft.ifft(coef, axis=1).real * self.grid_m


def sample_circle(radius: float, grid_m: int, truncation: int | None, seed,
                  tol: float = 1e-12) -> FieldSample:
    """One truncated-chaos draw on the M-point circle grid of given radius."""
    sampler = CircleSampler(radius, grid_m, truncation, tol)
    values = sampler.sample(1, make_rng(seed))[0]
    return FieldSample(points=sampler.points, values=values)


@dataclass(frozen=True)
class WhiteNoisePlan:
    """Independent unit-variance Gaussian values at distinct points."""

    points: np.ndarray
    variance: float = 1.0

    def sample(self, n: int, rng) -> np.ndarray:
        rng = make_rng(rng)
        return math.sqrt(self.variance) * rng.standard_normal((n, len(self.points)))


def restricted_transform(sample: FieldSample, r: float, n0: float) -> FieldSample:
    """Re-root a sampled field outside hyperbolic radius r at sector anchors.

    Values inside radius r become 0; a value at z outside becomes
    F(z) - F(anchor), where the anchor is the point of the circle of
    hyperbolic radius r in z's angular sector, sectors being the Q = [e^{n0}]
    equal arcs.  Raises MissingAnchorError if an anchor was not sampled.
    """
    q = int(np.floor(np.exp(n0)))
    anchor_abs = float(np.tanh(r / 2.0))
    values = np.empty(len(sample.points))
    for i, (z, v) in enumerate(zip(sample.points, sample.values)):
        if hyp_dist(0.0, z) < r:
            values[i] = 0.0
            continue
        h = np.floor(np.angle(z) * q / (2.0 * np.pi) + 0.5)
        anchor = anchor_abs * np.exp(2j * np.pi * h / q)
        values[i] = v - sample.value_at(anchor)
    return FieldSample(points=sample.points, values=values)
