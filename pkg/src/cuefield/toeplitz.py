"""Exact Toeplitz determinant identities for rational symbols.

D_N(f) = det(fhat(j-k))_{1<=j,k<=N} with fhat the Fourier coefficients of f,
and E prod_h f(e^{i theta_h}) = D_N(f) over CUE eigenphases.  For symbols

    f(e^{i t}) = p(e^{i t}) e^{-i k t} / (U_l(e^{-i t}) V_m(e^{i t})),
    U_l(x) = prod_j (1 - a_j x),  V_m(x) = prod_i (1 - b_i x),  |a_j|,|b_i| < 1,

Baxter's identity D_N(1/(U_l V_m)) = prod 1/(1 - a_j b_i) is exact once
N >= l or N >= m, and a numerator p of degree 2k with distinct roots c_j
contributes an explicit residue correction (`corrected_det`):

    D_N = (-1)^(C(k,2)+kN) p(0)^(N+k) prod_j [ p(a_j) / (p(0) V_m(a_j)) ]
          * (-1)^(C(k,2)) sum_{|S|=k, S in [2k]}
              prod_{i in S} V_m(c_i) / (a c_i^(N+k) U_l(1/c_i) prod_{j not in S}(c_j - c_i)),

with a the leading coefficient of p, valid for N + 3k >= l + m + 2.

Specializing to p(x) = prod_{z in Z}(1 - z x)(x - conj z) over points Z of the
open disk and denominator roots from a set Y gives the subset expansion of the
tilted moment

    E e^{B(U)} / E e^{B(G)} = sum_{S1,S2 subset Z, |S1|=|S2|}
        (-1)^{|S1|} prod_{S1} z^N prod_{S2} conj(z)^N c^Y(S1,S2) c_Z(S1,S2),

which `bias_expansion` / `exp_moment_cue` implement.  All products are
accumulated in log space with separate phase tracking and subset sums use
compensated summation: individual terms span e^{+-O(N)} even when the total
is O(1).
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import gaussian_field as gf
from .geometry import geodesic_point, hyp_dist

DIRECT_DET_MAX_N = 64
ROOT_SEPARATION = 1e-6
CONDITION_WARN = 1e12


class QuadratureError(RuntimeError):
    """Numerically integrated Fourier coefficients failed the doubling check."""


@dataclass(frozen=True)
class RationalSymbol:
    """Root-based rational symbol p(e^{it}) e^{-ikt} / (U_l(e^{-it}) V_m(e^{it})).

    `a` are the anti-holomorphic denominator roots (U_l), `b` the holomorphic
    ones (V_m), `p_roots`/`scale` give p(x) = scale * prod (x - c_j), and
    `shift` is the monomial twist k >= 0.
    """

    a: tuple = ()
    b: tuple = ()
    p_roots: tuple = ()
    scale: complex = 1.0
    shift: int = 0

    def __post_init__(self):
        a = tuple(complex(v) for v in self.a)
        b = tuple(complex(v) for v in self.b)
        roots = tuple(complex(v) for v in self.p_roots)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "scale", complex(self.scale))
        if self.shift < 0:
            raise ValueError("shift must be >= 0")
        if any(abs(v) >= 1.0 for v in a + b):
            raise ValueError("denominator roots must have modulus < 1")
        if self.scale == 0:
            raise ValueError("numerator scale must be nonzero")
        for c in roots:
            for aj in a:
                if abs(c - aj) < ROOT_SEPARATION:
                    raise ValueError("numerator root coincides with a denominator root")
        fixed = list(roots)
        for i in range(len(fixed)):
            for j in range(i + 1, len(fixed)):
                if abs(fixed[i] - fixed[j]) < ROOT_SEPARATION:
                    warnings.warn(
                        "nearly coincident numerator roots perturbed by 1e-6",
                        RuntimeWarning,
                    )
                    fixed[j] += ROOT_SEPARATION
        object.__setattr__(self, "p_roots", tuple(fixed))

    def p(self, x: complex) -> complex:
        out = self.scale
        for c in self.p_roots:
            out *= x - c
        return out

    def u(self, x: complex) -> complex:
        out = 1.0 + 0j
        for aj in self.a:
            out *= 1.0 - aj * x
        return out

    def v(self, x: complex) -> complex:
        out = 1.0 + 0j
        for bi in self.b:
            out *= 1.0 - bi * x
        return out


# ---------------------------------------------------------------------------
# log-space complex accumulation


def _log_complex(x: complex) -> tuple[float, float]:
    r, phi = cmath.polar(complex(x))
    if r == 0.0:
        return -math.inf, 0.0
    return math.log(r), phi


def _sum_log_terms(terms) -> complex:
    """Compensated sum of terms given as (log magnitude, phase)."""
    terms = [t for t in terms if t[0] > -math.inf]
    if not terms:
        return 0.0 + 0j
    peak = max(t[0] for t in terms)
    re = math.fsum(math.exp(lm - peak) * math.cos(ph) for lm, ph in terms)
    im = math.fsum(math.exp(lm - peak) * math.sin(ph) for lm, ph in terms)
    return complex(re, im) * math.exp(peak)


class _LogProduct:
    """Running complex product stored as (log magnitude, phase)."""

    def __init__(self):
        self.logmag = 0.0
        self.phase = 0.0

    def mul(self, x: complex, power: float = 1.0) -> "_LogProduct":
        lm, ph = _log_complex(x)
        self.logmag += power * lm
        self.phase += power * ph
        return self

    def div(self, x: complex, power: float = 1.0) -> "_LogProduct":
        return self.mul(x, -power)

    def as_term(self) -> tuple[float, float]:
        return self.logmag, self.phase

    def value(self) -> complex:
        return cmath.exp(complex(self.logmag, self.phase))


# ---------------------------------------------------------------------------
# Fourier coefficients and the direct determinant oracle


def _h_series(roots, length: int) -> np.ndarray:
    """Complete homogeneous coefficients h_n: prod 1/(1-r x) = sum h_n x^n."""
    h = np.zeros(length, dtype=complex)
    h[0] = 1.0
    if not roots:
        return h
    q = np.array([1.0 + 0j])
    for r in roots:
        q = np.convolve(q, np.array([1.0, -complex(r)]))
    for m in range(1, length):
        acc = 0.0 + 0j
        for i in range(1, min(len(q), m + 1)):
            acc += q[i] * h[m - i]
        h[m] = -acc
    return h


def fourier_coeffs(sym: RationalSymbol, lags) -> np.ndarray:
    """Fourier coefficients fhat(lag) by exact series convolution.

    The geometric series of 1/V_m (positive exponents) and of
    1/U_l(e^{-it}) (negative exponents) are truncated where the tail drops
    below 1e-15 and convolved with the numerator coefficients.
    """
    lags = np.asarray(list(lags), dtype=int)
    moduli = [abs(v) for v in sym.a + sym.b]
    peak = max(moduli) if moduli else 0.0
    if peak == 0.0:
        trunc = 1
    else:
        trunc = max(int(math.ceil(math.log(1e-18) / math.log(peak))), 1)
    span = int(np.max(np.abs(lags))) if len(lags) else 0
    trunc += span + len(sym.p_roots) + sym.shift + 1

    hb = _h_series(sym.b, trunc)          # exponent +n
    ha = _h_series(sym.a, trunc)          # exponent -n
    pc = np.array([sym.scale], dtype=complex)
    for c in sym.p_roots:
        pc = np.convolve(pc, np.array([-complex(c), 1.0]))
    # pc[d] multiplies e^{i(d - shift) t}

    # assemble on a dense exponent axis
    lo = -(trunc - 1) - sym.shift
    hi = (trunc - 1) + len(sym.p_roots)
    full = np.convolve(hb, ha[::-1])      # exponents -(trunc-1) .. +(trunc-1)
    dense = np.convolve(full, pc)         # exponents lo .. hi
    out = np.zeros(len(lags), dtype=complex)
    for i, lag in enumerate(lags):
        idx = lag - lo
        if 0 <= idx < len(dense):
            out[i] = dense[idx]
    return out


def _toeplitz_det(coeff_by_lag, n: int) -> complex:
    """det(fhat(j-k)) from a lag -> coefficient mapping for |lag| <= n-1."""
    lags = np.arange(-(n - 1), n)
    chat = {int(l): coeff_by_lag(int(l)) for l in lags}
    mat = np.empty((n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            mat[j, k] = chat[j - k]
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > CONDITION_WARN:
        warnings.warn(f"Toeplitz matrix condition estimate {cond:.2e}", RuntimeWarning)
    return complex(np.linalg.det(mat))


def direct_det(sym: RationalSymbol, n: int) -> complex:
    """Determinant oracle: pivoted elimination on the N x N coefficient matrix."""
    if n < 1 or n > DIRECT_DET_MAX_N:
        raise ValueError(f"direct determinant supports 1 <= N <= {DIRECT_DET_MAX_N}")
    coeffs = fourier_coeffs(sym, range(-(n - 1), n))
    table = {lag: c for lag, c in zip(range(-(n - 1), n), coeffs)}
    return _toeplitz_det(lambda l: table[l], n)


# ---------------------------------------------------------------------------
# closed forms


def baxter_det(a, b, n: int) -> complex:
    """Exact D_N(1/(U_l V_m)) = prod_ij 1/(1 - a_j b_i), valid for N >= l or N >= m."""
    a = tuple(complex(v) for v in a)
    b = tuple(complex(v) for v in b)
    if not (n >= len(a) or n >= len(b)):
        raise ValueError("Baxter identity needs N >= l or N >= m")
    prod = _LogProduct()
    for aj in a:
        for bi in b:
            prod.div(1.0 - aj * bi)
    return prod.value()


def corrected_det(sym: RationalSymbol, n: int) -> complex:
    """Closed form for D_N with numerator zeros, via the residue subset sum."""
    ell, m = len(sym.a), len(sym.b)
    k = sym.shift
    roots = sym.p_roots
    if len(roots) != 2 * k:
        raise ValueError("corrected determinant needs deg p = 2 * shift")
    if k == 0:
        if not (n >= ell or n >= m):
            raise ValueError("k = 0 case needs N >= l or N >= m")
        base = _LogProduct().mul(sym.scale, n)
        lm, ph = _log_complex(baxter_det(sym.a, sym.b, n))
        base.logmag += lm
        base.phase += ph
        return base.value()
    if n + 3 * k < ell + m + 2:
        raise ValueError("need N + 3k >= l + m + 2 for the residue form")
    if n < max(ell - k, 1):
        raise ValueError("need N >= max(l - k, 1)")
    p0 = sym.p(0.0)
    if p0 == 0:
        raise ValueError("p must not vanish at 0")
    for i, ci in enumerate(roots):
        for j, cj in enumerate(roots):
            if i < j and abs(ci - cj) < ROOT_SEPARATION:
                raise ValueError("numerator roots must be pairwise distinct")

    pref = _LogProduct().mul(p0, n + k)
    sign = (-1) ** (math.comb(k, 2) + k * n) * (-1) ** math.comb(k, 2)
    for aj in sym.a:
        pref.mul(sym.p(aj)).div(p0).div(sym.v(aj))

    terms = []
    for s in combinations(range(2 * k), k):
        term = _LogProduct()
        in_s = set(s)
        for i in s:
            ci = roots[i]
            term.mul(sym.v(ci))
            term.div(sym.scale)
            term.div(ci, n + k)
            term.div(sym.u(1.0 / ci))
            for j in range(2 * k):
                if j not in in_s:
                    term.div(roots[j] - ci)
        terms.append((term.logmag + pref.logmag, term.phase + pref.phase))
    return sign * _sum_log_terms(terms)


# ---------------------------------------------------------------------------
# subset expansion for exponential moments of the CUE field


@dataclass(frozen=True)
class ExpansionTerm:
    """One (S1, S2) summand of the tilted-moment expansion (index tuples into plus)."""

    s1: tuple
    s2: tuple
    value: complex


def _c_upper(bias: gf.BiasSpec, s1, s2) -> complex:
    """c^Y(S1, S2); |c^Y| <= 1.  Minus sets smaller than plus are zero-padded."""
    pad = len(bias.plus) - len(bias.minus)
    half = _LogProduct()
    for i in s1:
        z = bias.plus[i]
        half.mul(z, pad)
        for y in bias.minus:
            half.mul((z - y) / (1.0 - np.conj(y) * z))
    other = _LogProduct()
    for i in s2:
        z = bias.plus[i]
        other.mul(z, pad)
        for y in bias.minus:
            other.mul((z - y) / (1.0 - np.conj(y) * z))
    return half.value() * np.conj(other.value())


def _c_lower_log(plus, s1, s2) -> tuple[float, float]:
    """c_Z(S1, S2) as a (log magnitude, phase) pair.

    The orientation of the two difference products is fixed by the residue
    derivation (and by positivity on the diagonal S1 = S2): the first runs
    over (z - w), the second over conj(w) - conj(z), z in the subset and w in
    its complement.
    """
    k = len(plus)
    s1c = [i for i in range(k) if i not in s1]
    s2c = [i for i in range(k) if i not in s2]
    prod = _LogProduct()
    for i in range(k):
        for j in range(k):
            prod.mul(1.0 - plus[i] * np.conj(plus[j]))
    for i in s1:
        for j in s1c:
            prod.div(plus[i] - plus[j])
    for i in s1:
        for j in s2:
            prod.div(1.0 - plus[i] * np.conj(plus[j]))
    for i in s2c:
        for j in s1c:
            prod.div(1.0 - plus[j] * np.conj(plus[i]))
    for i in s2c:
        for j in s2:
            prod.div(np.conj(plus[j]) - np.conj(plus[i]))
    return prod.as_term()


def bias_expansion(bias: gf.BiasSpec, n: int) -> list[ExpansionTerm]:
    """All subset-pair terms of E e^{B(U)} / E e^{B(G)} at dimension n.

    The (empty, empty) term is exactly 1; the total over terms multiplied by
    the Gaussian moment is the CUE moment.  Warns when the expansion is badly
    conditioned (some |c_Z| huge from nearly coincident plus points).
    """
    if bias.lam != 1.0:
        raise ValueError("the exact expansion requires a unit tilt coefficient")
    k = len(bias.plus)
    out = []
    worst = 0.0
    for size in range(k + 1):
        for s1 in combinations(range(k), size):
            for s2 in combinations(range(k), size):
                term = _LogProduct()
                for i in s1:
                    term.mul(bias.plus[i], n)
                for i in s2:
                    term.mul(np.conj(bias.plus[i]), n)
                lm, ph = _c_lower_log(bias.plus, s1, s2)
                worst = max(worst, lm)
                term.logmag += lm
                term.phase += ph
                value = ((-1) ** size) * term.value() * _c_upper(bias, s1, s2)
                out.append(ExpansionTerm(s1=s1, s2=s2, value=value))
    if worst > math.log(1e12):
        warnings.warn(
            f"bias expansion badly conditioned: max |c_Z| ~ e^{worst:.1f}",
            RuntimeWarning,
        )
    return out


def exp_moment_cue(bias: gf.BiasSpec, n: int) -> float:
    """E e^{B(U)} at dimension n: Gaussian moment times the subset expansion."""
    terms = bias_expansion(bias, n)
    total = _sum_log_terms([_log_complex(t.value) for t in terms])
    if abs(total.imag) > 1e-9 * max(abs(total.real), 1e-300):
        warnings.warn(
            f"imaginary residue {total.imag:.3e} in a real moment", RuntimeWarning
        )
    return gf.exp_moment_gaussian(bias) * total.real


def moment_symbol(bias: gf.BiasSpec) -> RationalSymbol:
    """Rational symbol whose D_N is E e^{B(U)}: prod|1-z e^{it}|^2 / prod|1-y e^{it}|^2."""
    roots: list[complex] = []
    scale = 1.0 + 0j
    for z in bias.plus:
        roots.extend([1.0 / z if z != 0 else math.inf, np.conj(z)])
        scale *= -z
    if any(z == 0 for z in bias.plus):
        raise ValueError("plus points must be nonzero to form the symbol")
    return RationalSymbol(
        a=tuple(np.conj(y) for y in bias.minus),
        b=tuple(bias.minus),
        p_roots=tuple(roots),
        scale=scale,
        shift=len(bias.plus),
    )


@dataclass(frozen=True)
class DeltaBound:
    """Suppression bound for the non-leading expansion terms."""

    delta: float
    delta_prime: float = 0.0
    first_correction: float | None = None


def delta_bound(bias: gf.BiasSpec, n: int, split_point=None) -> DeltaBound:
    """Delta = max_z e^{-N exp(-d(0,z))} prod_{x != z} coth(d(x,z)/2) over plus.

    With a split point w, also Delta' (the same max over plus minus {w}) and
    the first-correction approximation of E e^{B(U)} / E e^{B(G)} keeping
    only the (empty, empty) and ({w}, {w}) terms.
    """
    plus = bias.plus

    def suppression(z) -> float:
        val = -n * math.exp(-float(hyp_dist(0.0, z)))
        for x in plus:
            if x != z:
                val -= math.log(math.tanh(float(hyp_dist(x, z)) / 2.0))
        return math.exp(val)

    delta = max(suppression(z) for z in plus)
    if split_point is None:
        return DeltaBound(delta=delta, delta_prime=delta)
    w = complex(split_point)
    if w not in plus:
        raise ValueError("split point must be one of the plus points")
    rest = [z for z in plus if z != w]
    delta_prime = max(suppression(z) for z in rest) if rest else 0.0
    corr = 2.0 * n * math.log(abs(w)) if w != 0 else -math.inf
    for y in bias.minus:
        corr += 2.0 * math.log(math.tanh(float(hyp_dist(w, y)) / 2.0))
    for x in rest:
        corr -= 2.0 * math.log(math.tanh(float(hyp_dist(w, x)) / 2.0))
    return DeltaBound(
        delta=delta,
        delta_prime=delta_prime,
        first_correction=1.0 - math.exp(corr),
    )


# ---------------------------------------------------------------------------
# characteristic-function oracle and truncation control


@dataclass(frozen=True)
class CharFnProbe:
    """Frequencies xi[h, j] at ray points tanh(h/2) * omega_j plus a tilt."""

    xi: np.ndarray
    ray_phases: tuple
    bias: gf.BiasSpec = field(default_factory=gf.BiasSpec)

    def __post_init__(self):
        xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        phases = tuple(complex(w) for w in self.ray_phases)
        if xi.shape[1] != len(phases):
            raise ValueError("xi needs one column per ray phase")
        for w in phases:
            if abs(abs(w) - 1.0) > 1e-12:
                raise ValueError("ray phases must be unimodular")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "ray_phases", phases)

    @property
    def depth(self) -> int:
        return self.xi.shape[0]

    def ray_points(self) -> np.ndarray:
        h = np.arange(1, self.depth + 1, dtype=float)
        return geodesic_point(h)[:, None] * np.asarray(self.ray_phases)[None, :]

    def log_l(self, x) -> np.ndarray:
        """L(x) = (1/2) sum_{h,j} xi[h,j] log(1 - p_{h,j} x), principal branch."""
        x = np.asarray(x, dtype=complex)
        pts = self.ray_points()
        acc = np.zeros(x.shape, dtype=complex)
        for h in range(self.depth):
            for j in range(len(self.ray_phases)):
                acc += 0.5 * self.xi[h, j] * np.log(1.0 - pts[h, j] * x)
        return acc

    def regime_ok(self, n: int, m: float = 1.0) -> bool:
        """Whether depth obeys d <= log N - m log log N."""
        return self.depth <= math.log(n) - m * math.log(math.log(n))


def cf_probe(probe: CharFnProbe, n: int, nodes: int = 4096, tol: float = 1e-10) -> complex:
    """Oracle for E[e^{i sum xi U + B(U)}] as a Toeplitz determinant.

    The (non-rational) symbol is integrated on a power-of-two circle grid and
    self-validated by a node-doubling consistency check at `tol`.
    """
    if n > 16:
        raise ValueError("characteristic-function oracle supports N <= 16")
    if nodes & (nodes - 1):
        raise ValueError("node count must be a power of two")

    def coeff_table(num_nodes: int) -> np.ndarray:
        theta = 2.0 * np.pi * np.arange(num_nodes) / num_nodes
        x = np.exp(1j * theta)
        sym = np.exp(2j * probe.log_l(x).real)
        for z in probe.bias.plus:
            sym = sym * np.abs(1.0 - z * x) ** 2
        for y in probe.bias.minus:
            sym = sym / np.abs(1.0 - y * x) ** 2
        return np.fft.fft(sym) / num_nodes

    lags = np.arange(-(n - 1), n)
    base = coeff_table(nodes)
    fine = coeff_table(2 * nodes)
    got = base[lags % nodes]
    ref = fine[lags % (2 * nodes)]
    err = float(np.max(np.abs(got - ref)))
    if err > tol:
        raise QuadratureError(f"coefficient doubling residual {err:.3e} > {tol:.1e}")
    table = {int(l): ref[i] for i, l in enumerate(lags)}
    return _toeplitz_det(lambda l: table[l], n)


def taylor_exp_neg_il(probe: CharFnProbe, degree: int) -> np.ndarray:
    """Taylor coefficients of e^{-iL(x)} at 0 through the given degree."""
    pts = probe.ray_points().ravel()
    xi = probe.xi.ravel()
    g = np.zeros(degree + 1, dtype=complex)
    for k in range(1, degree + 1):
        g[k] = 1j * 0.5 * np.sum(xi * pts**k) / k  # -i * (-xi/2 p^k/k)
    f = np.zeros(degree + 1, dtype=complex)
    f[0] = 1.0
    for k in range(1, degree + 1):
        f[k] = np.sum(np.arange(1, k + 1) * g[1 : k + 1] * f[k - 1 :: -1][: k]) / k
    return f


def truncation_tail(probe: CharFnProbe, radius: float, degree: int,
                    n: int | None = None, grid: int = 1024) -> tuple[float, float]:
    """(stated bound, measured sup) for the Taylor truncation of e^{-iL}.

    bound = sinh(sum |xi|) * (radius * zeta_d)^degree with zeta_d = tanh(d/2);
    the measured value is the sup of |e^{-iL} - truncation| over a circle of
    the given radius.  Requires radius <= 1/zeta_d (minus 1/N when N given).
    """
    zeta_d = float(np.tanh(probe.depth / 2.0))
    ceiling = 1.0 / zeta_d - (1.0 / n if n else 0.0)
    if radius > ceiling:
        raise ValueError(f"radius {radius} exceeds admissible {ceiling}")
    bound = math.sinh(float(np.sum(np.abs(probe.xi)))) * (radius * zeta_d) ** degree
    coeffs = taylor_exp_neg_il(probe, degree)
    x = radius * np.exp(2j * np.pi * np.arange(grid) / grid)
    exact = np.exp(-1j * probe.log_l(x))
    approx = np.polyval(coeffs[::-1], x)
    return bound, float(np.max(np.abs(exact - approx)))
