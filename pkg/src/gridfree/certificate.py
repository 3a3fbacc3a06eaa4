"""Dual-certificate construction and kernel-based optimality conditions.

For sources t_1 < ... < t_M the certificate is the function

    Qtilde(t) = sum_i alpha_i K(t, t_i) + beta_i d2K(t, t_i)

built on the empirical kernel K(t, u) = sum_j p_j psi(s_j, t) psi(s_j, u),
with coefficients solving the 2M-by-2M interpolation system
Qtilde(t_i) = w(t_i), Qtilde'(t_i) = w'(t_i).  Validity means the certificate
stays below the weight w away from the sources, in one of two branches:
either Qtilde <= w everywhere (direct) or Qtilde >= w everywhere, in which
case 2w - Qtilde is the certificate (reflected).  A valid certificate proves
that the true sources are the unique optimum of the weighted recovery
program, with no separation requirement.

Closely spaced sources make the interpolation system extremely
ill-conditioned (relative minimum singular value around 1e-12 for pairs at
one twentieth of the PSF width), so the solve uses a column-pivoted QR
factorization in double precision with extended-precision iterative
refinement, and evaluates the certificate on the verification grid in
extended precision.  All public inputs and outputs remain doubles.

This machinery is one-dimensional, matching the scope of the theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr, solve_triangular

from .core import Domain, PSFModel, SamplingMeasure

__all__ = [
    "KernelEval",
    "Certificate",
    "MarginReport",
    "ConditionReport",
    "CertificateConditionError",
    "kernel",
    "build_limit_matrix",
    "build_eps_matrix",
    "solve_certificate",
    "certificate_value",
    "check_conditions",
]

_LD = np.longdouble


class CertificateConditionError(Exception):
    """A required condition (Independence, in practice) fails numerically."""


@dataclass(frozen=True)
class KernelEval:
    """Empirical kernel K(t, u) = <psi_t, psi_u> under the sampling measure."""

    psf: PSFModel
    P: SamplingMeasure

    def __post_init__(self):
        if len(self.P) < 1:
            raise ValueError("sampling measure must be nonempty")
        object.__setattr__(self, "_s", np.asarray(self.P.points, dtype=_LD))
        object.__setattr__(self, "_p", np.asarray(self.P.weights, dtype=_LD))

    def _require_1d(self):
        if self.psf.dim != 1:
            raise NotImplementedError("certificate machinery is one-dimensional")

    def _factor(self, t, order: int) -> np.ndarray:
        """(n_samples, n_t) array of psi or dpsi/dt at (s_j, t_k), extended precision."""
        t = np.asarray(t, dtype=_LD)
        fn = self.psf.eval if order == 0 else self.psf.deriv_t
        return fn(self._s[:, None], t[None, :])

    def weight_ld(self, t) -> np.ndarray:
        return self._p @ self._factor(np.atleast_1d(t), 0)

    def weight_deriv_ld(self, t) -> np.ndarray:
        return self._p @ self._factor(np.atleast_1d(t), 1)


def kernel(ke: KernelEval, t, u, dt: int = 0, du: int = 0):
    """K and its slot derivatives: sum_j p_j psi^(dt)(s_j, t) psi^(du)(s_j, u).

    dt and du select the derivative order (0 or 1) in each slot; t and u
    broadcast elementwise.
    """
    ke._require_1d()
    if dt not in (0, 1) or du not in (0, 1):
        raise ValueError("derivative orders must be 0 or 1")
    t_arr = np.asarray(t, dtype=_LD)
    u_arr = np.asarray(u, dtype=_LD)
    shape = np.broadcast_shapes(t_arr.shape, u_arr.shape)
    tb = np.broadcast_to(t_arr, shape).reshape(-1)
    ub = np.broadcast_to(u_arr, shape).reshape(-1)
    vals = ke._p @ (ke._factor(tb, dt) * ke._factor(ub, du))
    out = np.asarray(vals, dtype=float).reshape(shape)
    return float(out) if out.ndim == 0 else out


def _v_stack_ld(ke: KernelEval, locations: np.ndarray) -> np.ndarray:
    """(2M, n) stack of [psi(s, t_i); d2 psi(s, t_i)] rows, extended precision."""
    V = ke._factor(locations, 0).T
    D = ke._factor(locations, 1).T
    return np.vstack([V, D])


def _check_locations(locations) -> np.ndarray:
    locs = np.asarray(locations, dtype=float)
    if locs.ndim != 1 or len(locs) < 1:
        raise ValueError("locations must be a nonempty 1D array")
    if len(np.unique(locs)) != len(locs):
        raise ValueError("locations must be pairwise distinct")
    return np.sort(locs)


def build_limit_matrix(ke: KernelEval, locations) -> np.ndarray:
    """The 2M-by-2M interpolation matrix [[K, d2K], [d1K, d1d2K]] at the sources.

    Equals sum_j p_j v(s_j) v(s_j)^T for the stacked feature vector v, hence
    symmetric positive semidefinite by construction.
    """
    ke._require_1d()
    locs = _check_locations(locations)
    U = _v_stack_ld(ke, locs)
    K = (U * ke._p) @ U.T
    return np.asarray(K, dtype=float)


def build_eps_matrix(ke: KernelEval, locations, eps: float) -> np.ndarray:
    """Finite-separation variant of the interpolation matrix.

    Rows j use K(t_j - eps, t_i) and d2K(t_j - eps, t_i); rows M + j use the
    symmetric differences (K(t_j + eps, .) - K(t_j - eps, .)) / (2 eps).
    Converges to the limit matrix as eps -> 0.
    """
    ke._require_1d()
    locs = _check_locations(locations)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if len(locs) > 1 and eps >= 0.5 * np.min(np.diff(locs)):
        raise ValueError("eps must be smaller than half the minimum source gap")
    locs_ld = np.asarray(locs, dtype=_LD)
    eps_ld = _LD(eps)
    U = _v_stack_ld(ke, locs)          # columns indexed by samples
    minus = ke._factor(locs_ld - eps_ld, 0).T   # (M, n) rows: psi(s, t_j - eps)
    plus = ke._factor(locs_ld + eps_ld, 0).T
    top = (minus * ke._p) @ U.T
    diff = ((plus - minus) * ke._p) @ U.T / (2 * eps_ld)
    return np.asarray(np.vstack([top, diff]), dtype=float)


@dataclass(frozen=True)
class MarginReport:
    """Grid statistics backing a certificate's validity verdict."""

    valid: bool
    interp_value_rel: float
    interp_deriv_abs: float
    min_margin_off_support: float
    max_overshoot: float  # max over grid of Q - w; <= 0 up to tolerance when valid
    n_grid: int


@dataclass(frozen=True)
class Certificate:
    """Interpolation coefficients and the branch/validity report."""

    locations: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    branch: str
    margin_report: MarginReport
    _alpha_ld: np.ndarray = field(repr=False, compare=False, default=None)
    _beta_ld: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def is_valid(self) -> bool:
        return self.margin_report.valid


def _solve_refined(K64: np.ndarray, K_ld: np.ndarray, b_ld: np.ndarray, rounds: int = 6):
    """Pivoted-QR solve with extended-precision iterative refinement."""
    Q, R, piv = qr(K64, pivoting=True)

    def solve64(rhs):
        y = Q.T @ rhs
        z = solve_triangular(R, y)
        out = np.empty_like(z)
        out[piv] = z
        return out

    z = solve64(np.asarray(b_ld, dtype=float)).astype(_LD)
    best = z
    best_res = np.max(np.abs(K_ld @ z - b_ld))
    for _ in range(rounds):
        r = b_ld - K_ld @ z
        z = z + solve64(np.asarray(r, dtype=float)).astype(_LD)
        res = np.max(np.abs(K_ld @ z - b_ld))
        if res < best_res:
            best, best_res = z, res
    return best


def _verification_grid(domain: Domain, locs: np.ndarray, n_uniform: int, n_near: int,
                       near_width: float) -> np.ndarray:
    lo, hi = domain.bounds[0]
    pieces = [np.linspace(lo, hi, n_uniform)]
    for t in locs:
        pieces.append(np.clip(np.linspace(t - near_width, t + near_width, n_near), lo, hi))
    return np.unique(np.concatenate(pieces))


def _qtilde_on_grid(ke: KernelEval, locs, alpha_ld, beta_ld, grid):
    """(Qtilde(grid), w(grid)) in extended precision via the sample-space form."""
    U = _v_stack_ld(ke, locs)                     # (2M, n)
    q_s = np.concatenate([alpha_ld, beta_ld]) @ U  # q evaluated on the samples
    Psi_g = ke._factor(np.asarray(grid, dtype=_LD), 0)  # (n, G)
    return (ke._p * q_s) @ Psi_g, ke._p @ Psi_g


def solve_certificate(ke: KernelEval, locations, domain: Domain | None = None,
                      singular_rtol: float = 1e-13, n_uniform: int = 10_000,
                      n_near: int = 100, near_width: float = 1e-3,
                      branch_tol: float = 1e-9, support_radius: float = 1e-4) -> Certificate:
    """Build the certificate for the given sources and verify it on a grid.

    Solves the interpolation system for (alpha, beta), then checks which
    branch holds on a dense verification grid (n_uniform points plus n_near
    points within near_width of every source).  Near-singular interpolation
    matrices (relative minimum singular value below singular_rtol) raise
    CertificateConditionError, pointing at the Independence condition; a
    certificate whose graph crosses the weight in both directions is
    returned with valid=False rather than raising.
    """
    ke._require_1d()
    locs = _check_locations(locations)
    M = len(locs)
    if domain is None:
        domain = Domain.interval(float(np.min(ke.P.points)), float(np.max(ke.P.points)))

    K64 = build_limit_matrix(ke, locs)
    sv = np.linalg.svd(K64, compute_uv=False)
    if sv[-1] <= singular_rtol * sv[0]:
        raise CertificateConditionError(
            "interpolation matrix is numerically singular "
            f"(relative minimum singular value {sv[-1] / sv[0]:.3e}); "
            "the Independence condition fails for these sources and samples"
        )

    locs_ld = np.asarray(locs, dtype=_LD)
    U = _v_stack_ld(ke, locs)
    K_ld = (U * ke._p) @ U.T
    b_ld = np.concatenate([ke.weight_ld(locs_ld), ke.weight_deriv_ld(locs_ld)])
    z = _solve_refined(K64, K_ld, b_ld)
    alpha_ld, beta_ld = z[:M], z[M:]

    resid = np.abs(K_ld @ z - b_ld)
    interp_value_rel = float(np.max(resid[:M] / b_ld[:M]))
    interp_deriv_abs = float(np.max(resid[M:]))

    grid = _verification_grid(domain, locs, n_uniform, n_near, near_width)
    Qg, wg = _qtilde_on_grid(ke, locs, alpha_ld, beta_ld, grid)
    deficit = wg - Qg  # w - Qtilde
    direct_ok = bool(np.min(deficit) >= -branch_tol)
    reflected_ok = bool(np.min(-deficit) >= -branch_tol)

    if direct_ok:
        branch, eff_margin = "direct", deficit
    elif reflected_ok:
        branch, eff_margin = "reflected", -deficit
    else:
        branch = "direct" if float(np.min(deficit)) >= float(np.min(-deficit)) else "reflected"
        eff_margin = deficit if branch == "direct" else -deficit

    off = np.min(np.abs(grid[:, None] - locs[None, :]), axis=1) > support_radius
    min_off = float(np.min(eff_margin[off])) if np.any(off) else math.inf
    report = MarginReport(
        valid=direct_ok or reflected_ok,
        interp_value_rel=interp_value_rel,
        interp_deriv_abs=interp_deriv_abs,
        min_margin_off_support=min_off,
        max_overshoot=float(np.max(-eff_margin)),
        n_grid=len(grid),
    )
    return Certificate(locs, np.asarray(alpha_ld, dtype=float), np.asarray(beta_ld, dtype=float),
                       branch, report, _alpha_ld=alpha_ld, _beta_ld=beta_ld)


def certificate_value(cert: Certificate, ke: KernelEval, t):
    """Evaluate the effective certificate Q(t).

    Returns Qtilde(t) = sum_i alpha_i K(t, t_i) + beta_i d2K(t, t_i) on the
    direct branch and 2 w(t) - Qtilde(t) on the reflected branch.
    """
    ke._require_1d()
    t_arr = np.atleast_1d(np.asarray(t, dtype=_LD))
    alpha = cert._alpha_ld if cert._alpha_ld is not None else np.asarray(cert.alpha, dtype=_LD)
    beta = cert._beta_ld if cert._beta_ld is not None else np.asarray(cert.beta, dtype=_LD)
    locs = np.asarray(cert.locations, dtype=_LD)
    Psi_t = ke._factor(t_arr, 0)                      # (n, T)
    V = ke._factor(locs, 0)                           # (n, M)
    D = ke._factor(locs, 1)
    # K(t, t_i) = sum_j p_j psi(s_j, t) psi(s_j, t_i); similarly with d2.
    Kt = (Psi_t * ke._p[:, None]).T @ V               # (T, M)
    Dt = (Psi_t * ke._p[:, None]).T @ D
    q = Kt @ alpha + Dt @ beta
    if cert.branch == "reflected":
        q = 2.0 * (ke._p @ Psi_t) - q
    out = np.asarray(q, dtype=float)
    return float(out[0]) if np.asarray(t).ndim == 0 else out


@dataclass(frozen=True)
class ConditionReport:
    """Numeric check of the optimality conditions at the given sources."""

    positivity_min_w: float
    independence_min_singular: float
    determinantal_min_absdet: float
    determinantal_sign_consistent: bool
    samples_tested: int
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return (self.positivity_min_w > 0 and self.independence_min_singular > 0
                and self.determinantal_min_absdet > 0 and self.determinantal_sign_consistent)


def _distinct_sorted(points: np.ndarray, min_gap: float = 1e-9) -> bool:
    return bool(np.all(np.diff(points) > min_gap))


def check_conditions(ke: KernelEval, locations, domain: Domain, n_random: int,
                     rho: float | None = None, seed: int = 0) -> ConditionReport:
    """Sample-based check of Positivity, Independence and the Determinantal condition.

    Positivity takes the minimum of w over a dense grid; Independence the
    minimum singular value of the interpolation matrix.  The Determinantal
    check draws n_random tuples of 2M + 1 distinct points, half with pairs
    confined to (t_i - rho, t_i + rho) plus one free point, half fully
    random (the stronger form), sorts each tuple, and records the minimum
    absolute determinant of the bordered kappa matrix and whether all
    determinants share one sign.
    """
    ke._require_1d()
    if n_random < 1:
        raise ValueError("n_random must be at least 1")
    locs = _check_locations(locations)
    M = len(locs)
    lo, hi = domain.bounds[0]
    if rho is None:
        cap = 0.1 * domain.max_width
        rho = cap if M == 1 else min(0.5 * float(np.min(np.diff(locs))), cap)

    warnings = []
    if len(ke.P) <= 2 * M:
        warnings.append(
            f"only {len(ke.P)} samples for {M} sources; uniqueness needs more than {2 * M}"
        )

    grid = np.linspace(lo, hi, 10_000)
    positivity_min_w = float(np.min(np.asarray(ke.weight_ld(grid), dtype=float)))

    K64 = build_limit_matrix(ke, locs)
    sv = np.linalg.svd(K64, compute_uv=False)
    independence_min_singular = float(sv[-1])

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    n_constrained = n_random // 2
    tuples = np.empty((n_random, 2 * M + 1))
    k = 0
    while k < n_random:
        if k < n_constrained:
            pts = [locs[i] + rho * (2.0 * rng.random() - 1.0) for i in range(M) for _ in range(2)]
            pts.append(lo + (hi - lo) * rng.random())
            cand = np.sort(np.clip(pts, lo, hi))
        else:
            cand = np.sort(lo + (hi - lo) * rng.random(2 * M + 1))
        if _distinct_sorted(cand):
            tuples[k] = cand
            k += 1

    U = _v_stack_ld(ke, locs)                                   # (2M, n)
    flat = np.asarray(tuples.reshape(-1), dtype=_LD)
    Psi = ke._factor(flat, 0)                                   # (n, T*(2M+1))
    w_flat = ke._p @ Psi
    kappa = np.asarray((U * ke._p) @ Psi / w_flat, dtype=float)  # (2M, ...)
    cols = kappa.reshape(2 * M, n_random, 2 * M + 1)
    mats = np.empty((n_random, 2 * M + 1, 2 * M + 1))
    mats[:, : 2 * M, :] = np.moveaxis(cols, 1, 0)
    mats[:, -1, :] = 1.0
    dets = np.linalg.det(mats)

    min_absdet = float(np.min(np.abs(dets)))
    sign_consistent = bool(np.all(dets > 0) or np.all(dets < 0))
    return ConditionReport(positivity_min_w, independence_min_singular, min_absdet,
                           sign_consistent, n_random, tuple(warnings))
