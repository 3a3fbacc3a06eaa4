"""Conditional-gradient solver for weighted nonnegative sparse recovery.

Solves, over nonnegative atomic measures mu = sum_k c_k delta_{t_k} with
locations anywhere in a continuous domain,

    minimize    sum_i ( sum_k c_k psi(s_i, t_k) - x(s_i) )^2
    subject to  sum_k w(t_k) c_k <= tau,   c >= 0.

Each iteration runs a continuous linear minimization oracle (coarse grid
scan plus golden-section refinement) to propose the location most aligned
with the negative gradient, re-solves all masses over the current support
(fully-corrective step), and then improves locations and masses jointly by
projected gradient descent with backtracking.  The Frank-Wolfe duality gap
bounds the suboptimality and drives termination.

Everything here is deterministic: identical inputs produce bit-identical
results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Domain, PSFModel, SamplingMeasure, psi_matrix, psi_deriv_matrix
from .simulate import ObservationSet

__all__ = [
    "AtomicMeasure",
    "SolverOptions",
    "SolveResult",
    "objective",
    "residual_gradient",
    "lmo",
    "fully_corrective",
    "local_refine",
    "duality_gap",
    "solve",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class AtomicMeasure:
    """Nonnegative atomic measure: locations (k,) or (k, 2) with masses >= 0."""

    locations: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        locs = np.array(self.locations, dtype=float)
        masses = np.array(self.masses, dtype=float)
        if locs.ndim not in (1, 2) or (locs.ndim == 2 and locs.shape[1] != 2):
            raise ValueError("locations must have shape (k,) or (k, 2)")
        if masses.ndim != 1 or len(masses) != len(locs):
            raise ValueError("need one mass per location")
        if len(masses) and not np.all(masses >= 0):
            raise ValueError("masses must be nonnegative")
        locs.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def empty(cls, ndim: int = 1) -> "AtomicMeasure":
        shape = (0,) if ndim == 1 else (0, 2)
        return cls(np.zeros(shape), np.zeros(0))

    def __len__(self) -> int:
        return len(self.masses)

    @property
    def atoms(self) -> list[tuple]:
        if self.locations.ndim == 1:
            return [(float(t), float(c)) for t, c in zip(self.locations, self.masses)]
        return [(tuple(map(float, t)), float(c)) for t, c in zip(self.locations, self.masses)]

    def weighted_mass(self, w_fn) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.asarray(w_fn(self.locations)) @ self.masses)


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of the conditional-gradient loop.

    tau is the weighted-mass budget of the constraint.  grid_oversample sets
    the LMO coarse grid density relative to the sample count; refine_tol and
    merge_tol default to 1e-12 and 1e-6 times the domain width, and
    prune_tol is relative to the largest mass.
    """

    tau: float
    grid_oversample: int = 10
    max_iters: int = 40
    gap_tol: float = 1e-10
    refine_tol: float | None = None
    merge_tol: float | None = None
    prune_tol: float = 1e-7
    refine_iters: int = 60
    fc_kkt_tol: float = 1e-9
    fc_max_iters: int = 20000

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        for name in ("grid_oversample", "max_iters", "gap_tol", "prune_tol",
                     "refine_iters", "fc_kkt_tol", "fc_max_iters"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("refine_tol", "merge_tol"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")

    def resolved_refine_tol(self, domain: Domain) -> float:
        return self.refine_tol if self.refine_tol is not None else 1e-12 * domain.max_width

    def resolved_merge_tol(self, domain: Domain) -> float:
        return self.merge_tol if self.merge_tol is not None else 1e-6 * domain.max_width


@dataclass(frozen=True)
class SolveResult:
    measure: AtomicMeasure
    objective_trace: np.ndarray
    final_gap: float
    iterations: int
    converged: bool


def _model(measure_locs, masses, obs: ObservationSet, psf: PSFModel) -> np.ndarray:
    if len(masses) == 0:
        return np.zeros(len(obs.values))
    return psi_matrix(psf, obs.sampling.points, measure_locs) @ masses


def objective(measure: AtomicMeasure, obs: ObservationSet, psf: PSFModel) -> float:
    """Least-squares data misfit of the measure against the observations."""
    resid = _model(measure.locations, measure.masses, obs, psf) - obs.values
    return float(resid @ resid)


def residual_gradient(measure: AtomicMeasure, obs: ObservationSet, psf: PSFModel) -> np.ndarray:
    """Gradient of the misfit in observation space: r_i = 2 (model_i - x_i)."""
    return 2.0 * (_model(measure.locations, measure.masses, obs, psf) - obs.values)


def _golden_min(f, a: float, b: float, tol: float):
    """Golden-section minimizer of f on [a, b] to bracket width tol."""
    h = b - a
    if h <= tol:
        m = 0.5 * (a + b)
        return m, f(m)
    c, d = a + _INVPHI2 * h, a + _INVPHI * h
    fc, fd = f(c), f(d)
    while h > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + _INVPHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + _INVPHI * h
            fd = f(d)
    m = 0.5 * (a + b)
    return m, f(m)


def lmo(r, psf: PSFModel, P: SamplingMeasure, w_fn, domain: Domain, opts: SolverOptions):
    """Continuous linear minimization oracle.

    Minimizes score(t) = (sum_i r_i psi(s_i, t)) / w(t) over the domain by a
    coarse scan of grid_oversample * len(P) points followed by local
    refinement (golden section in 1D, five rounds of per-axis golden section
    in 2D).  Grid ties break to the lowest index.  Returns (t_star, score).
    """
    r = np.asarray(r, dtype=float)
    if len(r) != len(P):
        raise ValueError("residual length must match the sample count")
    grid = domain.grid(opts.grid_oversample * len(P))
    scores = (r @ psi_matrix(psf, P.points, grid)) / np.asarray(w_fn(grid))
    j = int(np.argmin(scores))
    tol = opts.resolved_refine_tol(domain)

    if domain.ndim == 1:
        def score_at(t):
            return float(r @ psf.eval(P.points, t)) / float(w_fn(np.float64(t)))

        a = grid[max(j - 1, 0)]
        b = grid[min(j + 1, len(grid) - 1)]
        t_ref, s_ref = _golden_min(score_at, float(a), float(b), tol)
        if s_ref <= scores[j]:
            return t_ref, s_ref
        return float(grid[j]), float(scores[j])

    # 2D: alternating per-axis golden section within the bracketing cell
    g = int(round(math.sqrt(len(grid))))
    cell = domain.widths / max(g - 1, 1)
    t_cur = grid[j].copy()

    def score_at_2d(t):
        return float(r @ psf.eval(P.points, t)) / float(w_fn(t))

    s_cur = float(scores[j])
    for _ in range(5):
        for ax in range(2):
            lo = max(t_cur[ax] - cell[ax], domain.bounds[ax][0])
            hi = min(t_cur[ax] + cell[ax], domain.bounds[ax][1])

            def f_ax(v, ax=ax):
                t_try = t_cur.copy()
                t_try[ax] = v
                return score_at_2d(t_try)

            v_ref, s_ref = _golden_min(f_ax, lo, hi, tol)
            if s_ref <= s_cur:
                t_cur[ax] = v_ref
                s_cur = s_ref
    return t_cur, s_cur


def _project_mass_cap(u: np.ndarray, tau: float) -> np.ndarray:
    """Euclidean projection onto {u >= 0, sum(u) <= tau} (sort-based)."""
    v = np.maximum(u, 0.0)
    if v.sum() <= tau:
        return v
    mu = np.sort(u)[::-1]
    cssv = np.cumsum(mu) - tau
    idx = np.arange(1, len(u) + 1)
    keep = mu - cssv / idx > 0
    theta = cssv[keep][-1] / idx[keep][-1]
    return np.maximum(u - theta, 0.0)


def fully_corrective(locations, obs: ObservationSet, psf: PSFModel, w_fn, tau: float,
                     warm_start=None, kkt_tol: float = 1e-9, max_iters: int = 20000) -> np.ndarray:
    """Optimal masses over a fixed support.

    Minimizes the misfit over c >= 0 with sum_k w(t_k) c_k <= tau by
    accelerated projected gradient in the variables u_k = w(t_k) c_k, where
    the constraint set is the mass-capped nonnegative orthant and projection
    is exact (sort-based).  Iterates until the projected-gradient KKT
    residual drops below kkt_tol.
    """
    locations = np.asarray(locations, dtype=float)
    k = len(locations)
    if k == 0:
        return np.zeros(0)
    uniq = np.unique(locations, axis=0) if locations.ndim == 2 else np.unique(locations)
    if len(uniq) != k:
        raise ValueError("atom locations must be distinct")
    if tau <= 0:
        return np.zeros(k)

    wts = np.asarray(w_fn(locations), dtype=float)
    B = psi_matrix(psf, obs.sampling.points, locations) / wts
    x = obs.values
    # The quadratic is tiny (k atoms): precompute its Gram form once so each
    # accelerated step costs O(k^2).
    gram = B.T @ B
    lin = B.T @ x
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1])
    if lip == 0:
        return np.zeros(k)

    if warm_start is None:
        u = np.zeros(k)
    else:
        u = _project_mass_cap(np.asarray(warm_start, dtype=float) * wts, tau)
    y = u.copy()
    t_mom = 1.0
    for it in range(max_iters):
        grad_y = 2.0 * (gram @ y - lin)
        u_new = _project_mass_cap(y - grad_y / lip, tau)
        # adaptive restart (gradient scheme): kill momentum when it points uphill
        if (y - u_new) @ (u_new - u) > 0:
            t_mom = 1.0
            grad_u = 2.0 * (gram @ u - lin)
            u_new = _project_mass_cap(u - grad_u / lip, tau)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom**2))
        y = u_new + ((t_mom - 1.0) / t_next) * (u_new - u)
        u, t_mom = u_new, t_next
        if it % 8 == 0:
            grad_u = 2.0 * (gram @ u - lin)
            if np.max(np.abs(u - _project_mass_cap(u - grad_u, tau))) <= kkt_tol:
                break
    return u / wts


def _merge_atoms(locs: np.ndarray, masses: np.ndarray, merge_tol: float):
    """Merge atoms closer than merge_tol: masses add, location = mass-weighted mean."""
    locs = locs.copy()
    masses = masses.copy()
    while len(masses) > 1:
        if locs.ndim == 1:
            d = np.abs(locs[:, None] - locs[None, :])
        else:
            diff = locs[:, None, :] - locs[None, :, :]
            d = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(d, np.inf)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        if d[i, j] >= merge_tol:
            break
        total = masses[i] + masses[j]
        if total > 0:
            merged = (masses[i] * locs[i] + masses[j] * locs[j]) / total
        else:
            merged = 0.5 * (locs[i] + locs[j])
        keep = np.ones(len(masses), dtype=bool)
        keep[j] = False
        locs = locs[keep]
        masses = masses[keep]
        pos = i if i < j else i - 1
        locs[pos] = merged
        masses[pos] = total
    return locs, masses


def local_refine(measure: AtomicMeasure, obs: ObservationSet, psf: PSFModel, domain: Domain,
                 iters: int, tau: float | None = None, w_fn=None,
                 merge_tol: float | None = None) -> AtomicMeasure:
    """Joint gradient descent on (locations, masses) with backtracking.

    Locations are projected to the domain and masses to the nonnegative
    orthant; when tau and w_fn are given, masses are rescaled to keep the
    weighted-mass budget feasible.  Only objective-decreasing steps are
    accepted, so the objective never increases.  Atoms that end up closer
    than merge_tol are merged (masses summed, mass-weighted mean location).
    """
    if merge_tol is None:
        merge_tol = 1e-6 * domain.max_width
    locs = np.array(measure.locations, dtype=float)
    c = np.array(measure.masses, dtype=float)
    if len(c) == 0:
        return measure
    x = obs.values
    s_pts = obs.sampling.points
    ndim = 1 if locs.ndim == 1 else 2

    def loss_of(t_arr, c_arr):
        resid = psi_matrix(psf, s_pts, t_arr) @ c_arr - x
        return float(resid @ resid)

    def projected(t_arr, c_arr):
        t_arr = domain.clip(t_arr)
        c_arr = np.maximum(c_arr, 0.0)
        if tau is not None:
            wc = float(np.asarray(w_fn(t_arr)) @ c_arr)
            if wc > tau and wc > 0:
                c_arr = c_arr * (tau / wc)
        return t_arr, c_arr

    loss = loss_of(locs, c)
    for _ in range(iters):
        Psi = psi_matrix(psf, s_pts, locs)
        resid = Psi @ c - x
        D = psi_deriv_matrix(psf, s_pts, locs)
        if ndim == 1:
            Jt = D * c[None, :]
        else:
            Jt = (D * c[None, :, None]).reshape(len(x), 2 * len(c))
        J = np.hstack([Jt, Psi])
        g = J.T @ resid
        # Damped Gauss-Newton direction: nearby atoms couple strongly, so a
        # plain (even diagonally scaled) gradient step stalls in the long
        # curved valley where mass trades between neighbors.
        H = J.T @ J
        damp = 1e-9 * max(float(np.max(np.diag(H))), 1e-300)
        try:
            delta = -np.linalg.solve(H + damp * np.eye(len(g)), g)
        except np.linalg.LinAlgError:
            delta = -g
        if float(delta @ g) >= 0:  # not a descent direction, fall back
            delta = -g

        improved = False
        step = 1.0
        while step > 1e-14:
            dt = delta[: len(delta) - len(c)]
            t_new = locs + step * (dt if ndim == 1 else dt.reshape(-1, 2))
            c_new = c + step * delta[len(delta) - len(c):]
            t_new, c_new = projected(t_new, c_new)
            loss_new = loss_of(t_new, c_new)
            if loss_new < loss:
                locs, c, loss = t_new, c_new, loss_new
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    locs, c = _merge_atoms(locs, c, merge_tol)
    return AtomicMeasure(locs, c)


def _atom_scores_min(r, psf, P, w_fn, locs) -> float:
    """Smallest LMO score over the current atom locations (inf when empty)."""
    if len(locs) == 0:
        return math.inf
    corr = r @ psi_matrix(psf, P.points, locs)
    return float(np.min(corr / np.asarray(w_fn(locs))))


def duality_gap(measure: AtomicMeasure, obs: ObservationSet, psf: PSFModel, w_fn,
                tau: float, domain: Domain, opts: SolverOptions | None = None) -> float:
    """Frank-Wolfe certificate: objective(measure) - optimum <= gap.

    gap = <r, model> - min(0, tau * score*) where r is the misfit gradient
    in observation space and score* is the LMO value (tightened with the
    scores at the measure's own atoms, where the minimum sits at an
    optimum).  Nonnegative up to roundoff, and zero exactly at an optimum.
    """
    if opts is None:
        opts = SolverOptions(tau=max(tau, 1e-300))
    model = _model(measure.locations, measure.masses, obs, psf)
    r = 2.0 * (model - obs.values)
    _, score_star = lmo(r, psf, obs.sampling, w_fn, domain, opts)
    score_star = min(score_star, _atom_scores_min(r, psf, obs.sampling, w_fn, measure.locations))
    return float(r @ model - min(0.0, tau * score_star))


def _min_dist_to(locs: np.ndarray, t) -> float:
    if len(locs) == 0:
        return math.inf
    if locs.ndim == 1:
        return float(np.min(np.abs(locs - t)))
    return float(np.min(np.linalg.norm(locs - np.asarray(t)[None, :], axis=1)))


def solve(obs: ObservationSet, psf: PSFModel, w_fn, domain: Domain, opts: SolverOptions) -> SolveResult:
    """Run the conditional-gradient loop until the relative gap closes.

    Per iteration: LMO proposes a location (added while its score is
    negative), masses are re-solved over the support, locations and masses
    are refined jointly, and atoms below the relative prune threshold are
    dropped.  Stops when gap <= gap_tol * (1 + objective), returning the
    best iterate with converged=False if the budget runs out.  The returned
    measure is always feasible and the objective trace nonincreasing.
    """
    x = obs.values
    ndim = 1 if psf.dim == 1 else 2
    locs = np.zeros((0,)) if ndim == 1 else np.zeros((0, 2))
    c = np.zeros(0)
    merge_tol = opts.resolved_merge_tol(domain)
    # Proposals closer than half a coarse LMO cell to an existing atom add a
    # near-duplicate column; skip them and let refinement move the atom.
    n_cells = max(opts.grid_oversample * len(obs.sampling), 2)
    if ndim == 2:
        n_cells = max(int(math.ceil(math.sqrt(n_cells))), 2)
    dedupe_radius = max(merge_tol, 0.5 * domain.max_width / (n_cells - 1))
    trace = [float(x @ x)]
    final_gap = math.inf
    converged = False
    iterations = 0
    stalled = 0

    for it in range(1, opts.max_iters + 1):
        iterations = it
        model = _model(locs, c, obs, psf)
        r = 2.0 * (model - x)
        t_prop, score_star = lmo(r, psf, obs.sampling, w_fn, domain, opts)
        score_star = min(score_star, _atom_scores_min(r, psf, obs.sampling, w_fn, locs))
        final_gap = float(r @ model - min(0.0, opts.tau * score_star))
        if final_gap <= opts.gap_tol * (1.0 + trace[-1]):
            converged = True
            iterations = it - 1
            break

        prev_locs, prev_c = locs, c
        if score_star < 0 and _min_dist_to(locs, t_prop) > dedupe_radius:
            locs = np.append(locs, [t_prop], axis=0) if ndim == 2 else np.append(locs, t_prop)
            c = np.append(c, 0.0)
        c = fully_corrective(locs, obs, psf, w_fn, opts.tau, warm_start=c,
                             kkt_tol=opts.fc_kkt_tol, max_iters=opts.fc_max_iters)
        refined = local_refine(AtomicMeasure(locs, c), obs, psf, domain, opts.refine_iters,
                               tau=opts.tau, w_fn=w_fn, merge_tol=merge_tol)
        locs, c = np.array(refined.locations), np.array(refined.masses)
        if len(c):
            keep = c > opts.prune_tol * c.max()
            locs, c = locs[keep], c[keep]

        loss_new = float(np.sum((_model(locs, c, obs, psf) - x) ** 2))
        if loss_new > trace[-1]:
            locs, c = prev_locs, prev_c  # keep the trace exactly nonincreasing
            loss_new = trace[-1]
        improvement = trace[-1] - loss_new
        trace.append(loss_new)
        if improvement <= 1e-14 * (1.0 + loss_new):
            stalled += 1
            if stalled >= 2:
                break
        else:
            stalled = 0

    if not converged:
        model = _model(locs, c, obs, psf)
        r = 2.0 * (model - x)
        _, score_star = lmo(r, psf, obs.sampling, w_fn, domain, opts)
        score_star = min(score_star, _atom_scores_min(r, psf, obs.sampling, w_fn, locs))
        final_gap = float(r @ model - min(0.0, opts.tau * score_star))
        if final_gap <= opts.gap_tol * (1.0 + trace[-1]):
            converged = True

    # Defensive: feasibility must hold exactly up to roundoff.
    if len(c):
        wc = float(np.asarray(w_fn(locs)) @ c)
        if wc > opts.tau * (1.0 + 1e-9) and wc > 0:
            c = c * (opts.tau / wc)
    return SolveResult(AtomicMeasure(locs, c), np.array(trace), final_gap, iterations, converged)
