"""Exact verification of the Gaussian T-system identities.

Two computable facts underpin the Gaussian's no-separation guarantee:

* the (2M+1)-point collocation determinant built from shifted Gaussians,
  their first derivatives, and a row of ones never vanishes for increasing
  arguments (``gauss_tsys_det``), and

* the polynomial family p_i defined by p_0 = 1,
  p_i(s) = 2s p_{i-1}(s - c_i) + p'_{i-1}(s - c_i) yields functions
  f_i = sum_j p_i^(j)(s)^2 / (2^j j!) that satisfy the second-derivative
  recursion f_i e^{s^2} = (d^2/ds^2)[e^{s^2} f_{i-1}(s - c_i)] and contain
  the positive constant square 2^i i!, hence are strictly positive
  (``p_sequence`` / ``f_sequence_check``).

The polynomial identities are checked in exact rational arithmetic, so a
pass is a proof for the orders tested.  Only ``gauss_tsys_det`` uses floats,
since its inputs are real; its determinants are computed by fraction-free
(Bareiss) elimination with partial pivoting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "Polynomial",
    "LemmaVerificationError",
    "p_sequence",
    "f_sequence_check",
    "FSequenceReport",
    "gauss_tsys_det",
    "det_bareiss",
    "tsys_det_montecarlo",
    "MonteCarloReport",
]


class LemmaVerificationError(Exception):
    """An exact identity that should always hold failed to verify."""


def _frac(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return Fraction(x)


@dataclass(frozen=True)
class Polynomial:
    """Univariate polynomial with exact rational coefficients.

    ``coefficients`` is a dense ascending-degree tuple of Fractions with a
    nonzero last entry; the zero polynomial is the empty tuple.
    """

    coefficients: tuple[Fraction, ...]

    def __post_init__(self):
        coeffs = tuple(_frac(c) for c in self.coefficients)
        while coeffs and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def of(cls, *coeffs) -> "Polynomial":
        return cls(tuple(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading(self) -> Fraction:
        return self.coefficients[-1] if self.coefficients else Fraction(0)

    def __bool__(self) -> bool:
        return bool(self.coefficients)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.coefficients, other.coefficients
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] += c
        return Polynomial(tuple(out))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + other.scale(-1)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        if not self or not other:
            return Polynomial(())
        out = [Fraction(0)] * (len(self.coefficients) + len(other.coefficients) - 1)
        for i, a in enumerate(self.coefficients):
            for j, b in enumerate(other.coefficients):
                out[i + j] += a * b
        return Polynomial(tuple(out))

    def scale(self, k) -> "Polynomial":
        k = _frac(k)
        return Polynomial(tuple(c * k for c in self.coefficients))

    def derivative(self) -> "Polynomial":
        return Polynomial(tuple(i * c for i, c in enumerate(self.coefficients) if i > 0))

    def shift(self, c) -> "Polynomial":
        """Compose with the translation s -> s - c, i.e. return p(s - c)."""
        c = _frac(c)
        x_minus_c = Polynomial((-c, Fraction(1)))
        result = Polynomial(())
        for coef in reversed(self.coefficients):
            result = result * x_minus_c + Polynomial((coef,))
        return result

    def __call__(self, x):
        acc = Fraction(0) if isinstance(x, (int, Fraction)) else 0.0
        for coef in reversed(self.coefficients):
            acc = acc * x + coef
        return acc

    def __repr__(self):
        return f"Polynomial({list(self.coefficients)!r})"


_ONE = Polynomial((Fraction(1),))
_TWO_S = Polynomial((Fraction(0), Fraction(2)))


def p_sequence(r: int, shifts) -> list[Polynomial]:
    """Polynomials p_0 .. p_r from the recursion 2s p_{i-1}(s-c_i) + p'_{i-1}(s-c_i).

    p_0 = 1; p_i has degree i and leading coefficient 2^i.
    """
    if r < 0:
        raise ValueError("order must be nonnegative")
    shifts = [_frac(c) for c in shifts]
    if len(shifts) < r:
        raise ValueError("need one shift per recursion step")
    ps = [_ONE]
    for i in range(1, r + 1):
        prev = ps[-1].shift(shifts[i - 1])
        ps.append(_TWO_S * prev + prev.derivative())
    return ps


@dataclass(frozen=True)
class FSequenceReport:
    """Per-order record of the verified sum-of-squares identity."""

    orders: tuple[int, ...]
    degrees: tuple[int, ...]
    constant_squares: tuple[Fraction, ...]

    def __len__(self):
        return len(self.orders)


def _sos_form(p: Polynomial, i: int) -> Polynomial:
    """sum_{j=0}^{i} p^(j)(s)^2 / (2^j j!)."""
    total = Polynomial(())
    deriv = p
    for j in range(i + 1):
        total = total + (deriv * deriv).scale(Fraction(1, 2**j * math.factorial(j)))
        deriv = deriv.derivative()
    return total


def f_sequence_check(r: int, shifts) -> FSequenceReport:
    """Verify, exactly, the f-recursion against its sum-of-squares form.

    For each i <= r the left side applies the conjugated second-derivative
    operator e^{-s^2} (d^2/ds^2) e^{s^2} to f_{i-1}(s - c_i), which on
    polynomials is h -> (4s^2 + 2) h + 4s h' + h''; the right side builds
    the sum of squares from p_i.  Coefficientwise equality is required, and
    the decomposition must contain the constant square 2^i i!.

    Raises LemmaVerificationError at the first differing coefficient.
    """
    if r < 0:
        raise ValueError("order must be nonnegative")
    if r > 8:
        raise ValueError("orders above 8 are not supported (degree growth)")
    shifts = [_frac(c) for c in shifts]
    ps = p_sequence(r, shifts)
    four_s2_plus_2 = Polynomial((Fraction(2), Fraction(0), Fraction(4)))
    four_s = Polynomial((Fraction(0), Fraction(4)))

    orders, degrees, consts = [], [], []
    f_prev = _ONE
    for i in range(r + 1):
        if i == 0:
            f_i = _ONE
        else:
            h = f_prev.shift(shifts[i - 1])
            f_i = four_s2_plus_2 * h + four_s * h.derivative() + h.derivative().derivative()
        sos = _sos_form(ps[i], i)
        if f_i.coefficients != sos.coefficients:
            la, lb = f_i.coefficients, sos.coefficients
            for k in range(max(len(la), len(lb))):
                a = la[k] if k < len(la) else Fraction(0)
                b = lb[k] if k < len(lb) else Fraction(0)
                if a != b:
                    raise LemmaVerificationError(
                        f"order {i}: coefficient of s^{k} differs "
                        f"(operator form {a}, sum of squares {b})"
                    )
        # j = i term of the decomposition: p_i^(i) is the constant i! 2^i,
        # so its square over 2^i i! is the positive constant 2^i i!.
        p_top = ps[i]
        for _ in range(i):
            p_top = p_top.derivative()
        const_sq = (p_top * p_top).scale(Fraction(1, 2**i * math.factorial(i)))
        expected = Fraction(2**i * math.factorial(i))
        if const_sq.degree != 0 or const_sq.coefficients[0] != expected:
            raise LemmaVerificationError(
                f"order {i}: constant square is {const_sq}, expected {expected}"
            )
        orders.append(i)
        degrees.append(f_i.degree)
        consts.append(expected)
        f_prev = f_i
    return FSequenceReport(tuple(orders), tuple(degrees), tuple(consts))


def det_bareiss(matrix) -> float | Fraction:
    """Determinant by fraction-free (Bareiss) elimination with partial pivoting.

    Exact for Fraction entries; for floats the divisions are still performed
    in the Bareiss pattern, with row pivoting on the largest entry.
    """
    a = [list(row) for row in matrix]
    n = len(a)
    if any(len(row) != n for row in a):
        raise ValueError("matrix must be square")
    sign = 1
    prev = 1
    for k in range(n - 1):
        piv = max(range(k, n), key=lambda r: abs(a[r][k]))
        if a[piv][k] == 0:
            return 0 * a[0][0]
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev
            a[i][k] = 0
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def gauss_tsys_matrix(s, t) -> np.ndarray:
    """Collocation matrix of the Gaussian system at points s and centers t.

    Rows alternate per center t_i: exp(-(s_j - t_i)^2) and
    -(s_j - t_i) exp(-(s_j - t_i)^2); the final row is all ones.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.ndim != 1 or t.ndim != 1:
        raise ValueError("s and t must be one-dimensional")
    if len(s) != 2 * len(t) + 1:
        raise ValueError(f"need len(s) == 2*len(t) + 1, got {len(s)} and {len(t)}")
    if len(np.unique(s)) != len(s):
        raise ValueError("s values must be distinct")
    d = s[None, :] - t[:, None]
    e = np.exp(-d * d)
    rows = np.empty((2 * len(t) + 1, len(s)))
    rows[0 : 2 * len(t) : 2] = e
    rows[1 : 2 * len(t) : 2] = -d * e
    rows[-1] = 1.0
    return rows


def gauss_tsys_det(s, t) -> float:
    """Determinant of the Gaussian collocation system.

    Nonzero for strictly increasing s and t; computed here for any distinct
    s so column permutations (which flip the sign) can be exercised.
    """
    return float(det_bareiss(gauss_tsys_matrix(s, t)))


@dataclass(frozen=True)
class MonteCarloReport:
    """Sign and magnitude statistics of random collocation determinants."""

    m: int
    n_draws: int
    min_abs_det: float
    min_rel_det: float  # min over draws of |det| / frobenius(matrix)
    sign_consistent: bool
    sign: int


def _sorted_draws(rng, n_points, lo, hi, min_gap, n_draws):
    """(n_draws, n_points) sorted uniforms with pairwise gaps >= min_gap."""
    if n_points == 1:
        return rng.random((n_draws, 1)) * (hi - lo) + lo
    out = np.empty((n_draws, n_points))
    filled = 0
    while filled < n_draws:
        block = np.sort(rng.random((n_draws, n_points)) * (hi - lo) + lo, axis=1)
        ok = np.min(np.diff(block, axis=1), axis=1) >= min_gap
        good = block[ok][: n_draws - filled]
        out[filled : filled + len(good)] = good
        filled += len(good)
    return out


def tsys_det_montecarlo(
    m: int,
    n_draws: int,
    seed: int = 0,
    s_range=(-2.0, 2.0),
    t_range=(-1.0, 1.0),
    min_gap: float = 0.02,
) -> MonteCarloReport:
    """Draw random increasing (s, t) tuples and check the determinant's sign.

    Tuples are drawn uniformly with a minimum spacing (min_gap) so the
    magnitude floor is meaningful; the claim under test is that every
    determinant is nonzero with one sign for fixed m.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(m,))))
    ss = _sorted_draws(rng, 2 * m + 1, *s_range, min_gap, n_draws)
    ts = _sorted_draws(rng, m, *t_range, min_gap, n_draws)
    min_abs = math.inf
    min_rel = math.inf
    signs = set()
    for k in range(n_draws):
        mat = gauss_tsys_matrix(ss[k], ts[k])
        det = float(det_bareiss(mat))
        min_abs = min(min_abs, abs(det))
        min_rel = min(min_rel, abs(det) / float(np.linalg.norm(mat)))
        signs.add(int(math.copysign(1.0, det)) if det != 0 else 0)
    consistent = len(signs) == 1 and 0 not in signs
    return MonteCarloReport(m, n_draws, min_abs, min_rel, consistent, signs.pop() if consistent else 0)
