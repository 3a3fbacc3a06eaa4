"""Point-spread-function models, sampling measures, and the location weight.

A point spread function (PSF) ``psi(s, t)`` gives the response measured at
sensor position ``s`` to a unit source at ``t``.  Observations are taken at
the points of a discrete sampling measure ``P``; the weight function

    w(t) = sum_i p_i * psi(s_i, t)

is the total mass a unit source at ``t`` deposits on the samples.  It is used
to reweight the mass of candidate locations so that sources near the image
border are not artificially cheap.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Domain",
    "SamplingMeasure",
    "PSFModel",
    "GaussianPSF",
    "SourceConfiguration",
    "psf_eval",
    "psf_deriv_t",
    "weight",
    "weight_deriv",
    "make_weight_fn",
    "unit_weight_fn",
]


@dataclass(frozen=True)
class Domain:
    """Search region for source locations: an interval or an axis-aligned box.

    ``bounds`` is one ``(lo, hi)`` pair per axis, finite with ``lo < hi``.
    """

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.bounds) not in (1, 2):
            raise ValueError("only 1D intervals and 2D boxes are supported")
        clean = []
        for lo, hi in self.bounds:
            lo, hi = float(lo), float(hi)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("domain bounds must be finite")
            if not lo < hi:
                raise ValueError(f"domain bounds need lo < hi, got ({lo}, {hi})")
            clean.append((lo, hi))
        object.__setattr__(self, "bounds", tuple(clean))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Domain":
        return cls(((lo, hi),))

    @classmethod
    def box(cls, xbounds, ybounds) -> "Domain":
        return cls((tuple(xbounds), tuple(ybounds)))

    @property
    def ndim(self) -> int:
        return len(self.bounds)

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def max_width(self) -> float:
        return float(self.widths.max())

    def contains(self, t, tol: float = 0.0) -> bool:
        t = np.asarray(t, dtype=float)
        if self.ndim == 1:
            return bool(np.all(t >= self.bounds[0][0] - tol) and np.all(t <= self.bounds[0][1] + tol))
        t = t.reshape(-1, 2)
        return bool(np.all(t >= self.lo - tol) and np.all(t <= self.hi + tol))

    def clip(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.ndim == 1:
            return np.clip(t, self.bounds[0][0], self.bounds[0][1])
        return np.clip(t, self.lo, self.hi)

    def grid(self, n: int) -> np.ndarray:
        """Uniform grid with ~n points: a linspace in 1D, a lattice in 2D."""
        if self.ndim == 1:
            lo, hi = self.bounds[0]
            return np.linspace(lo, hi, max(int(n), 2))
        g = max(int(math.ceil(math.sqrt(n))), 2)
        xs = np.linspace(self.bounds[0][0], self.bounds[0][1], g)
        ys = np.linspace(self.bounds[1][0], self.bounds[1][1], g)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SamplingMeasure:
    """Discrete positive measure on the sample locations (the observation design).

    ``points`` has shape (n,) in 1D or (n, 2) in 2D; ``weights`` are the
    strictly positive masses p_i.  The default design used throughout is the
    uniform counting measure (all weights 1) on the observation grid; no 1/n
    normalization is applied.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _readonly(self.points)
        wts = _readonly(self.weights)
        if pts.ndim not in (1, 2) or (pts.ndim == 2 and pts.shape[1] != 2):
            raise ValueError("points must have shape (n,) or (n, 2)")
        if wts.ndim != 1 or len(wts) != len(pts):
            raise ValueError("weights must be one positive real per point")
        if len(pts) < 1:
            raise ValueError("sampling measure needs at least one point")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(wts)):
            raise ValueError("points and weights must be finite")
        if not np.all(wts > 0):
            raise ValueError("weights must be strictly positive")
        uniq = np.unique(pts, axis=0) if pts.ndim == 2 else np.unique(pts)
        if len(uniq) != len(pts):
            raise ValueError("sample points must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def ndim(self) -> int:
        return 1 if self.points.ndim == 1 else 2

    @classmethod
    def uniform_grid(cls, n: int, domain: Domain) -> "SamplingMeasure":
        pts = domain.grid(n)
        return cls(pts, np.ones(len(pts)))


class PSFModel(ABC):
    """Interface for point spread functions psi(s, t).

    ``eval`` and ``deriv_t`` must accept numpy arrays and broadcast; the
    derivative is taken in the source argument t, one component per axis.
    Implementations built from numpy ufuncs preserve the input dtype, which
    the certificate machinery relies on for extended-precision evaluation.
    """

    dim: int = 1

    @abstractmethod
    def eval(self, s, t):
        """psi(s, t); in 2D the coordinate axis is the trailing axis."""

    @abstractmethod
    def deriv_t(self, s, t):
        """d psi / dt at (s, t); in 2D returns one component per axis."""


@dataclass(frozen=True)
class GaussianPSF(PSFModel):
    """Gaussian point spread function exp(-||s - t||^2 / sigma^2)."""

    sigma: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be positive and finite")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    def eval(self, s, t):
        d = np.asarray(s) - np.asarray(t)
        if self.dim == 1:
            return np.exp(-(d * d) / self.sigma**2)
        return np.exp(-np.sum(d * d, axis=-1) / self.sigma**2)

    def deriv_t(self, s, t):
        d = np.asarray(s) - np.asarray(t)
        if self.dim == 1:
            return (2.0 * d / self.sigma**2) * np.exp(-(d * d) / self.sigma**2)
        e = np.exp(-np.sum(d * d, axis=-1) / self.sigma**2)
        return (2.0 * d / self.sigma**2) * e[..., None]


@dataclass(frozen=True)
class SourceConfiguration:
    """Ground-truth point sources: locations t_i with amplitudes c_i > 0.

    Stored sorted (ascending in 1D, lexicographic in 2D); sorting is a
    canonical storage order only.
    """

    locations: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        locs = np.array(self.locations, dtype=float)
        amps = np.array(self.amplitudes, dtype=float)
        if locs.ndim not in (1, 2) or (locs.ndim == 2 and locs.shape[1] != 2):
            raise ValueError("locations must have shape (M,) or (M, 2)")
        if amps.ndim != 1 or len(amps) != len(locs):
            raise ValueError("need one amplitude per location")
        if not np.all(np.isfinite(locs)) or not np.all(np.isfinite(amps)):
            raise ValueError("locations and amplitudes must be finite")
        if len(amps) and not np.all(amps > 0):
            raise ValueError("amplitudes must be strictly positive")
        if len(locs):
            uniq = np.unique(locs, axis=0) if locs.ndim == 2 else np.unique(locs)
            if len(uniq) != len(locs):
                raise ValueError("source locations must be pairwise distinct")
            order = np.argsort(locs) if locs.ndim == 1 else np.lexsort((locs[:, 1], locs[:, 0]))
            locs, amps = locs[order], amps[order]
        object.__setattr__(self, "locations", _readonly(locs))
        object.__setattr__(self, "amplitudes", _readonly(amps))

    def __len__(self) -> int:
        return len(self.amplitudes)

    @property
    def ndim(self) -> int:
        return 1 if self.locations.ndim == 1 else 2


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(np.asarray(a, dtype=float))):
            raise ValueError("inputs must be finite")


def psf_eval(psf: PSFModel, s, t):
    """Evaluate psi(s, t), validating that both arguments are finite."""
    _check_finite(s, t)
    return psf.eval(s, t)


def psf_deriv_t(psf: PSFModel, s, t):
    """Evaluate the t-gradient of psi at (s, t), one component per axis."""
    _check_finite(s, t)
    return psf.deriv_t(s, t)


def psi_matrix(psf: PSFModel, s_points, t_points) -> np.ndarray:
    """Cross-evaluation matrix with entries psi(s_i, t_j), shape (n_s, n_t)."""
    s = np.asarray(s_points)
    t = np.asarray(t_points)
    if psf.dim == 1:
        return psf.eval(s[:, None], t[None, :])
    return psf.eval(s[:, None, :], t[None, :, :])


def psi_deriv_matrix(psf: PSFModel, s_points, t_points) -> np.ndarray:
    """t-derivative matrix, shape (n_s, n_t) in 1D or (n_s, n_t, 2) in 2D."""
    s = np.asarray(s_points)
    t = np.asarray(t_points)
    if psf.dim == 1:
        return psf.deriv_t(s[:, None], t[None, :])
    return psf.deriv_t(s[:, None, :], t[None, :, :])


def weight(psf: PSFModel, P: SamplingMeasure, t):
    """Weight w(t) = sum_i p_i psi(s_i, t).

    Accepts a single location or an array of locations; returns a scalar or
    an array accordingly.  Strictly positive for PSFs that are everywhere
    positive, such as the Gaussian.
    """
    t_arr, scalar = _as_location_array(t, psf.dim)
    vals = P.weights @ psi_matrix(psf, P.points, t_arr)
    return float(vals[0]) if scalar else vals


def weight_deriv(psf: PSFModel, P: SamplingMeasure, t):
    """Gradient of the weight, w'(t) = sum_i p_i dpsi/dt(s_i, t)."""
    t_arr, scalar = _as_location_array(t, psf.dim)
    D = psi_deriv_matrix(psf, P.points, t_arr)
    if psf.dim == 1:
        vals = P.weights @ D
        return float(vals[0]) if scalar else vals
    vals = np.einsum("i,ijk->jk", P.weights, D)
    return vals[0] if scalar else vals


def _as_location_array(t, dim: int):
    t = np.asarray(t)
    if dim == 1:
        if t.ndim == 0:
            return t.reshape(1), True
        return t, False
    if t.ndim == 1:
        return t.reshape(1, 2), True
    return t, False


def make_weight_fn(psf: PSFModel, P: SamplingMeasure):
    """Closure evaluating w(t) for arrays of locations."""

    def w(t):
        return weight(psf, P, t)

    return w


def unit_weight_fn(dim: int = 1):
    """Constant weight w(t) = 1, the unweighted variant of the objective."""

    def w(t):
        t_arr, scalar = _as_location_array(t, dim)
        return 1.0 if scalar else np.ones(len(t_arr))

    return w
