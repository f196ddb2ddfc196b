"""Sampling and evaluation of the CUE characteristic-polynomial field.

For a Haar-distributed N x N unitary with eigenphases theta_h, the field is

    U(z) = log|det(1 - z U_N)| = sum_h log|1 - z e^{i theta_h}|,

harmonic on the open disk and zero at the origin.  Two independent samplers
are provided:

* `sample_phases` / `sample_eigenphase_batch` with method="qr": QR of a
  complex Ginibre matrix with phase-corrected R diagonal, then an
  eigensolve.  This is the distributional oracle.
* The Verblunsky route: independent rotation-invariant coefficients
  (|alpha_k|^2 ~ Beta(1, N-1-k), last one uniform on the circle) feed the
  Szego recurrence, giving the secular coefficients of det(1 - zU) in
  O(N^2) per draw (`secular_coeff_batch`) or field values at chosen points
  in O(N) per point (`szego_point_values`) with no eigensolver.  This is
  the fast path.

Grid evaluation is either direct summation over phases or a balanced
product tree for the polynomial coefficients followed by one FFT, with
per-level renormalization since raw coefficient magnitudes span e^{+-O(N)}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import make_rng

# Eigenvalue-collision guard: grids on the unit circle are shifted by half a
# cell when an eigenphase comes this close to a grid angle.
COLLISION_TOL = 1e-12


class SingularPointError(ValueError):
    """Evaluation point coincides with an eigenvalue on the unit circle."""


@dataclass(frozen=True)
class PhaseVector:
    """Eigenphases of one Haar unitary, in (-pi, pi]."""

    phases: np.ndarray

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float).ravel()
        if ph.size == 0:
            raise ValueError("empty phase vector")
        if np.any(ph <= -np.pi) or np.any(ph > np.pi):
            raise ValueError("phases must lie in (-pi, pi]")
        object.__setattr__(self, "phases", ph)

    @property
    def dim(self) -> int:
        return len(self.phases)


def _wrap_phases(theta: np.ndarray) -> np.ndarray:
    return np.where(theta <= -np.pi, theta + 2.0 * np.pi, theta)


def _ginibre_eigenphases(n: int, batch: int, rng) -> np.ndarray:
    g = rng.standard_normal((batch, n, n)) + 1j * rng.standard_normal((batch, n, n))
    q, r = np.linalg.qr(g)
    d = np.einsum("bii->bi", r)
    q = q * (d / np.abs(d))[:, None, :]
    return _wrap_phases(np.angle(np.linalg.eigvals(q)))


def sample_verblunsky(n: int, batch: int, rng) -> np.ndarray:
    """Verblunsky coefficients alpha_0..alpha_{n-1} for `batch` draws.

    For k < n-1 the modulus satisfies |alpha_k|^2 ~ Beta(1, n-1-k) with a
    uniform phase; alpha_{n-1} is uniform on the unit circle.
    """
    rng = make_rng(rng)
    u = rng.random((batch, n))
    phase = np.exp(2j * np.pi * rng.random((batch, n)))
    radius = np.ones((batch, n))
    if n > 1:
        b = (n - 1 - np.arange(n - 1)).astype(float)
        radius[:, :-1] = np.sqrt(1.0 - u[:, :-1] ** (1.0 / b))
    return radius * phase


def secular_coeff_batch(n: int, batch: int, seed) -> np.ndarray:
    """Coefficients of det(1 - zU) for `batch` CUE draws, shape (batch, n+1).

    Runs the Szego recurrence in coefficient space; the returned row c
    satisfies det(1 - zU) = sum_j c[j] z^j with c[0] = 1.
    """
    rng = make_rng(seed)
    alpha = sample_verblunsky(n, batch, rng)
    phi = np.zeros((n + 1, batch), dtype=complex)
    psi = np.zeros((n + 1, batch), dtype=complex)
    work = np.zeros((n + 1, batch), dtype=complex)
    phi[0] = 1.0
    psi[0] = 1.0
    for k in range(n):
        a = alpha[:, k][None, :]
        w = work[: k + 2]
        w[0] = 0.0
        w[1:] = phi[: k + 1]
        phi[: k + 2] = w - np.conj(a) * psi[: k + 2]
        psi[: k + 2] -= a * w
    return np.conj(psi.T)


def szego_point_values(n: int, points, batch: int, seed, chunk: int = 250_000) -> np.ndarray:
    """U(z) at `points` for `batch` independent CUE draws, shape (batch, P).

    Pointwise Szego recurrence; O(n) per (draw, point), no eigensolver.
    """
    pts = np.asarray(points, dtype=complex).ravel()
    if np.any(np.abs(pts) > 1.0 + 1e-12):
        raise ValueError("points must lie in the closed unit disk")
    w = np.conj(pts)[None, :]
    rng = make_rng(seed)
    out = np.empty((batch, len(pts)))
    for lo in range(0, batch, chunk):
        b = min(chunk, batch - lo)
        alpha = sample_verblunsky(n, b, rng)
        phi = np.ones((b, len(pts)), dtype=complex)
        psi = np.ones((b, len(pts)), dtype=complex)
        for k in range(n):
            a = alpha[:, k][:, None]
            zphi = w * phi
            phi = zphi - np.conj(a) * psi
            psi = psi - a * zphi
        vals = np.abs(psi)
        if np.any(vals == 0.0):
            raise SingularPointError("evaluation point hit an eigenvalue")
        out[lo : lo + b] = np.log(vals)
    return out


def _szego_eigenphases(n: int, batch: int, rng) -> np.ndarray:
    """Eigenphases recovered as roots of the secular polynomial (oracle scale)."""
    coeffs = secular_coeff_batch(n, batch, rng)
    out = np.empty((batch, n))
    for i in range(batch):
        roots = np.roots(coeffs[i, ::-1])
        out[i] = _wrap_phases(-np.angle(roots))
    return out


def sample_eigenphase_batch(n: int, batch: int, seed, method: str = "qr") -> np.ndarray:
    """(batch, n) eigenphase draws; method "qr" (oracle) or "szego"."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    rng = make_rng(seed)
    if method == "qr":
        return _ginibre_eigenphases(n, batch, rng)
    if method == "szego":
        return _szego_eigenphases(n, batch, rng)
    raise ValueError(f"unknown sampler method {method!r}")


def sample_phases(n: int, seed, method: str = "qr") -> PhaseVector:
    """One CUE eigenphase sample."""
    return PhaseVector(sample_eigenphase_batch(n, 1, seed, method)[0])


def trace_power_sums(coeffs: np.ndarray, k_max: int) -> np.ndarray:
    """Tr U^k for k = 1..k_max from secular coefficients, shape (batch, k_max).

    Uses log det(1 - zU) = -sum_k Tr(U^k) z^k / k via the log-series
    recurrence on the coefficient rows.
    """
    c = np.asarray(coeffs, dtype=complex)
    batch, n1 = c.shape
    deg = n1 - 1
    s = np.zeros((batch, k_max + 1), dtype=complex)
    for k in range(1, k_max + 1):
        acc = c[:, k].copy() if k <= deg else np.zeros(batch, dtype=complex)
        for m in range(1, k):
            if k - m <= deg:
                acc -= (m / k) * s[:, m] * c[:, k - m]
        s[:, k] = acc
    return -s[:, 1:] * np.arange(1, k_max + 1)


def field_eval(phases: PhaseVector, points) -> np.ndarray:
    """Direct summation U(z) = sum_h log|1 - z e^{i theta_h}| at each point."""
    pts = np.asarray(points, dtype=complex).ravel()
    if np.any(np.abs(pts) > 1.0 + 1e-12):
        raise ValueError("points must lie in the closed unit disk")
    eig = np.exp(1j * phases.phases)
    out = np.empty(len(pts))
    chunk = max(1, int(4e6) // max(phases.dim, 1))
    for lo in range(0, len(pts), chunk):
        block = np.abs(1.0 - pts[lo : lo + chunk, None] * eig[None, :])
        if np.any(block == 0.0):
            raise SingularPointError("point coincides with an eigenvalue")
        out[lo : lo + chunk] = np.log(block).sum(axis=1)
    return out


@dataclass(frozen=True)
class FieldGrid:
    """Field values on the M-point grid radius * e^{2 pi i (j + offset)/M}.

    `offset` is 0 or 0.5 grid cells (the eigenvalue-collision guard on the
    unit circle).
    """

    radius: float
    values: np.ndarray
    offset: float = 0.0

    @property
    def grid_size(self) -> int:
        return len(self.values)

    def angles(self) -> np.ndarray:
        m = self.grid_size
        return 2.0 * np.pi * (np.arange(m) + self.offset) / m

    def points(self) -> np.ndarray:
        return self.radius * np.exp(1j * self.angles())


def _grid_offset(phases: np.ndarray, m: int) -> float:
    frac = phases * m / (2.0 * np.pi)
    dist = np.abs(frac - np.round(frac)) * (2.0 * np.pi / m)
    return 0.5 if np.any(dist < COLLISION_TOL) else 0.0


def _spread_order(k: int) -> list[int]:
    """Leaf order for the product tree: every block of sorted phases is a
    strided (circle-covering) subset, which keeps intermediate coefficients
    small; adjacent blocks of clustered roots would grow like e^{O(n)}."""
    if k <= 1:
        return list(range(k))
    evens = _spread_order((k + 1) // 2)
    odds = _spread_order(k // 2)
    return [2 * i for i in evens] + [2 * i + 1 for i in odds]


def char_poly_coeffs(phases: PhaseVector) -> tuple[np.ndarray, float]:
    """Coefficients of prod_h (1 - w e^{i theta_h}) with a log scale factor.

    Balanced product tree with FFT multiplication; each level renormalizes by
    the largest coefficient magnitude so the returned (coeffs, log_scale)
    represent the polynomial exactly on the log scale.
    """
    order = np.argsort(phases.phases)[_spread_order(phases.dim)]
    polys = [np.array([1.0, -np.exp(1j * t)]) for t in phases.phases[order]]
    log_scale = 0.0
    while len(polys) > 1:
        nxt = []
        for i in range(0, len(polys) - 1, 2):
            prod = _poly_mul(polys[i], polys[i + 1])
            peak = np.max(np.abs(prod))
            log_scale += math.log(peak)
            nxt.append(prod / peak)
        if len(polys) % 2:
            nxt.append(polys[-1])
        polys = nxt
    return polys[0], log_scale


def _poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a) + len(b) - 1
    if n <= 128:
        return np.convolve(a, b)
    nfft = 1 << (n - 1).bit_length()
    return (np.fft.ifft(np.fft.fft(a, nfft) * np.fft.fft(b, nfft)))[:n]


def eval_log_abs_on_grid(coeffs: np.ndarray, log_scale: float, radius: float,
                         m: int, offset: float = 0.0) -> np.ndarray:
    """log|P(z_j)| on the grid z_j = radius e^{2 pi i (j+offset)/m} via one FFT."""
    if radius <= 0.0:
        raise ValueError("grid evaluation needs radius > 0")
    k = np.arange(len(coeffs))
    scaled = coeffs * np.exp(k * math.log(radius))
    if offset:
        scaled = scaled * np.exp(2j * np.pi * offset * k / m)
    folded = np.zeros(m, dtype=complex)
    np.add.at(folded, k % m, scaled)
    vals = np.abs(np.fft.ifft(folded) * m)
    if np.any(vals == 0.0):
        raise SingularPointError("grid point coincides with an eigenvalue")
    return log_scale + np.log(vals)


def field_grid(phases: PhaseVector, radius: float, m: int, method: str = "auto") -> FieldGrid:
    """U on the M-point circle grid of the given radius.

    method "direct" sums over phases; "fft" builds the characteristic
    polynomial by the product tree and evaluates with one transform
    (requires m a power of two); "auto" picks fft when admissible.
    """
    if m < 1:
        raise ValueError("grid size must be >= 1")
    if not 0.0 <= radius <= 1.0:
        raise ValueError("radius must lie in [0, 1]")
    if radius == 0.0:
        return FieldGrid(radius=0.0, values=np.zeros(m))
    if method == "auto":
        method = "fft" if m & (m - 1) == 0 and phases.dim >= 16 else "direct"
    offset = _grid_offset(phases.phases, m) if radius == 1.0 else 0.0
    if method == "direct":
        angles = 2.0 * np.pi * (np.arange(m) + offset) / m
        values = field_eval(phases, radius * np.exp(1j * angles))
    elif method == "fft":
        if m & (m - 1):
            raise ValueError("fft method requires a power-of-two grid")
        coeffs, log_scale = char_poly_coeffs(phases)
        values = eval_log_abs_on_grid(coeffs, log_scale, radius, m, offset)
    else:
        raise ValueError(f"unknown grid method {method!r}")
    return FieldGrid(radius=radius, values=values, offset=offset)


def field_max(phases: PhaseVector, radius: float, m: int, method: str = "auto") -> tuple[int, float]:
    """(argmax index, max value) of U over the M-point grid."""
    grid = field_grid(phases, radius, m, method)
    idx = int(np.argmax(grid.values))
    return idx, float(grid.values[idx])


def field_variance_series(radius: float, n: int, tol: float = 1e-12) -> float:
    """Var U(z) at |z| = radius: (1/2) sum_k min(k, n) radius^{2k} / k^2."""
    if not 0.0 <= radius < 1.0:
        raise ValueError("radius must be in [0, 1)")
    total = 0.0
    k = 1
    while True:
        term = 0.5 * min(k, n) * radius ** (2 * k) / k**2
        total += term
        if term < tol and k > n:
            return total
        k += 1


@dataclass(frozen=True)
class RelaxationReport:
    """Observed slacks of the deterministic grid inequalities (>= 0 when they hold)."""

    dim: int
    m_param: float
    grid_size: int
    radial_pairs: tuple
    radial_slide_slack: float
    inner_max: float
    outer_max: float
    max_slack: float


def relaxation_check(phases: PhaseVector, m_param: float, grid_size: int,
                     radial_pairs=None) -> RelaxationReport:
    """Verify the radial-slide inequality and the inner-circle max bound.

    On matched angular grids, for every angle and r1 < r2,
        U(r2 w) <= U(r1 w) + N log((1+r2)/(1+r1)),
    and consequently the grid max on |z| = 1 - m/N is at least the grid max
    on |z| = 1 minus m.  Returns the observed slacks; both are nonnegative
    up to float roundoff whenever N >= 10 m.
    """
    n = phases.dim
    if n < 10 * m_param:
        raise ValueError("need N >= 10 * m_param for the relaxation check")
    r_in = 1.0 - m_param / n
    if radial_pairs is None:
        radial_pairs = ((0.3, 0.7), (0.7, r_in), (r_in, 1.0))
    offset = _grid_offset(phases.phases, grid_size)
    angles = 2.0 * np.pi * (np.arange(grid_size) + offset) / grid_size
    ring = np.exp(1j * angles)

    slack = math.inf
    for r1, r2 in radial_pairs:
        if not 0.0 <= r1 < r2 <= 1.0:
            raise ValueError("radial pairs must satisfy 0 <= r1 < r2 <= 1")
        u1 = field_eval(phases, r1 * ring)
        u2 = field_eval(phases, r2 * ring)
        budget = n * math.log((1.0 + r2) / (1.0 + r1))
        slack = min(slack, float(np.min(u1 + budget - u2)))

    inner = field_eval(phases, r_in * ring)
    outer = field_eval(phases, ring)
    inner_max = float(np.max(inner))
    outer_max = float(np.max(outer))
    return RelaxationReport(
        dim=n,
        m_param=m_param,
        grid_size=grid_size,
        radial_pairs=tuple(radial_pairs),
        radial_slide_slack=slack,
        inner_max=inner_max,
        outer_max=outer_max,
        max_slack=inner_max - (outer_max - m_param),
    )
