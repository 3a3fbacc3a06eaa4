"""Synthetic observations and the randomized image populations.

All randomness flows through numpy's Philox counter-based generator (a named,
documented, 64-bit algorithm) seeded via SeedSequence, with one independent
substream per population item, so datasets are bit-reproducible across
platforms and may be generated in parallel without changing the result.
Gaussian draws use the Box-Muller transform of two uniforms rather than any
platform sampling routine.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Domain, GaussianPSF, PSFModel, SamplingMeasure, SourceConfiguration, psi_matrix

__all__ = [
    "ObservationSet",
    "PopulationSpec",
    "synthesize",
    "add_noise",
    "gen_population",
]

POPULATION_KINDS = ("central", "boundary", "pair", "smlm2d")

# Interior margin shared by all 1D population kinds: sources live in
# (0.1, 0.9) for central/pair, in (0, 0.1) and (0.9, 1) for boundary.
_MARGIN = 0.1


@dataclass(frozen=True)
class ObservationSet:
    """Samples x(s_i) of a signal, with noise level and seed provenance."""

    sampling: SamplingMeasure
    values: np.ndarray
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        if vals.ndim != 1 or len(vals) != len(self.sampling):
            raise ValueError("need one observed value per sample point")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class PopulationSpec:
    """Recipe for a population of simulated images.

    kind
        "central":  n_sources points uniform in (0.1, 0.9).
        "boundary": per_region points in each of (0, 0.1) and (0.9, 1).
        "pair":     two points at x +/- separation/2, x uniform away from
                    the border so both sources stay in (0.1, 0.9).
        "smlm2d":   n_sources points uniform in the unit square's interior
                    margin, 2D Gaussian PSF on an n-by-n pixel grid, with
                    additive Gaussian noise of level noise_sigma.
    All sources get amplitude 1.
    """

    kind: str
    count: int
    sigma: float = 0.1
    n: int = 100
    seed: int = 0
    separation: float | None = None
    n_sources: int = 5
    per_region: int = 2
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in POPULATION_KINDS:
            raise ValueError(f"unknown population kind {self.kind!r}")
        if self.count <= 0:
            raise ValueError("count must be positive")
        if self.n < 1:
            raise ValueError("grid size n must be at least 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.kind == "pair":
            d = self.separation
            if d is None or d <= 0:
                raise ValueError("pair populations need a positive separation")
            if _MARGIN + d / 2 > (1 - _MARGIN) - d / 2:
                raise ValueError(f"separation {d} too large to fit both sources in the interior")
        if self.kind != "pair" and self.n_sources < 0:
            raise ValueError("n_sources must be nonnegative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def psf(self) -> GaussianPSF:
        return GaussianPSF(sigma=self.sigma, dim=2 if self.kind == "smlm2d" else 1)

    @property
    def domain(self) -> Domain:
        if self.kind == "smlm2d":
            return Domain.box((0.0, 1.0), (0.0, 1.0))
        return Domain.interval(0.0, 1.0)

    def sampling(self) -> SamplingMeasure:
        if self.kind == "smlm2d":
            centers = (np.arange(self.n) + 0.5) / self.n
            X, Y = np.meshgrid(centers, centers, indexing="ij")
            return SamplingMeasure(np.column_stack([X.ravel(), Y.ravel()]), np.ones(self.n**2))
        return SamplingMeasure(np.linspace(0.0, 1.0, self.n), np.ones(self.n))


def synthesize(config: SourceConfiguration, psf: PSFModel, sampling: SamplingMeasure) -> ObservationSet:
    """Noiseless observations x(s_j) = sum_i c_i psi(s_j, t_i)."""
    if len(config) == 0:
        return ObservationSet(sampling, np.zeros(len(sampling)))
    values = psi_matrix(psf, sampling.points, config.locations) @ config.amplitudes
    return ObservationSet(sampling, values)


def _rng(seed, index=None) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=() if index is None else (int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _normals(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normals via Box-Muller on uniform pairs (deterministic)."""
    m = (size + 1) // 2
    u1 = 1.0 - rng.random(m)  # in (0, 1], keeps log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return z[:size]


def add_noise(obs: ObservationSet, noise_sigma: float, seed: int) -> ObservationSet:
    """Add i.i.d. Gaussian noise of standard deviation noise_sigma.

    Same (obs, noise_sigma, seed) always produces the identical observation
    set.  noise_sigma = 0 returns the data unchanged.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    if noise_sigma == 0:
        return replace(obs, seed=int(seed))
    eta = noise_sigma * _normals(_rng(seed), len(obs.values))
    return ObservationSet(obs.sampling, obs.values + eta, float(noise_sigma), int(seed))


def _draw_in(rng, lo, hi, k, min_gap=1e-9):
    """k distinct uniform draws in the open interval (lo, hi)."""
    out = []
    while len(out) < k:
        x = lo + (hi - lo) * rng.random()
        if x <= lo or x >= hi:
            continue
        if all(abs(x - y) > min_gap for y in out):
            out.append(x)
    return np.array(out)


def _draw_sources(spec: PopulationSpec, rng: np.random.Generator) -> SourceConfiguration:
    if spec.kind == "central":
        locs = _draw_in(rng, _MARGIN, 1 - _MARGIN, spec.n_sources)
    elif spec.kind == "boundary":
        left = _draw_in(rng, 0.0, _MARGIN, spec.per_region)
        right = _draw_in(rng, 1 - _MARGIN, 1.0, spec.per_region)
        locs = np.concatenate([left, right])
    elif spec.kind == "pair":
        d = spec.separation
        lo, hi = _MARGIN + d / 2, (1 - _MARGIN) - d / 2
        x = lo + (hi - lo) * rng.random()
        locs = np.array([x - d / 2, x + d / 2])
    else:  # smlm2d
        pts = []
        while len(pts) < spec.n_sources:
            cand = _MARGIN + (1 - 2 * _MARGIN) * rng.random(2)
            if all(np.linalg.norm(cand - q) > 1e-9 for q in pts):
                pts.append(cand)
        locs = np.array(pts).reshape(-1, 2)
    return SourceConfiguration(locs, np.ones(len(locs)))


def gen_population(spec: PopulationSpec) -> list[tuple[SourceConfiguration, ObservationSet]]:
    """Generate spec.count (sources, observations) items.

    Item i is drawn from the substream SeedSequence(seed, spawn_key=(i,)),
    so the population is reproducible item-by-item regardless of how the
    loop is scheduled.
    """
    psf = spec.psf
    sampling = spec.sampling()
    items = []
    for i in range(spec.count):
        rng = _rng(spec.seed, i)
        config = _draw_sources(spec, rng)
        obs = synthesize(config, psf, sampling)
        if spec.noise_sigma > 0:
            eta = spec.noise_sigma * _normals(rng, len(obs.values))
            obs = ObservationSet(sampling, obs.values + eta, spec.noise_sigma, spec.seed)
        items.append((config, obs))
    return items
