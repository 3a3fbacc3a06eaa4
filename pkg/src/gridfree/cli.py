"""Command-line front end: dataset generation, solving, sweeps, certification.

Subcommands
-----------
simulate       write a dataset (sources + observations) from a config
solve          run the solver on a dataset, score against ground truth
sweep          separation or noise sweep, one CSV row per sweep value
certify        build and verify a dual certificate for given sources
verify-lemmas  exact polynomial identities and determinant Monte-Carlo
demo2d         two-dimensional frame: simulate, solve, emit point CSVs

Configs are JSON documents with a ``schema_version`` field; unknown keys are
rejected.  Every command is a pure function of (config, seed): outputs are
byte-identical across reruns (wall-clock timing is printed to the console,
never written into result files).  Exit codes: 0 success, 2 validation
error, 3 condition or certificate failure, 4 lemma verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .certificate import CertificateConditionError, KernelEval, check_conditions, solve_certificate
from .core import Domain, GaussianPSF, SamplingMeasure, SourceConfiguration, make_weight_fn, unit_weight_fn, weight
from .scoring import TIE_BREAK, greedy_match
from .simulate import ObservationSet, PopulationSpec, add_noise, gen_population, synthesize
from .solver import SolverOptions, solve
from .tsystems import LemmaVerificationError, f_sequence_check, tsys_det_montecarlo

__all__ = ["main", "ExperimentConfig", "ConfigError", "load_config"]

SCHEMA_VERSION = 1

EXPERIMENTS = ("central", "boundary", "separation", "noise", "certify", "lemmas", "demo2d")

# Paper-derived defaults: sigma = 0.1, n = 100 samples on [0, 1] (50 for the
# separation experiments), populations of 100 (reweighing) or 20 (sweeps),
# separations 0.1 sigma .. 2 sigma, noise eta ~ N(0, 0.1^2), radius 0.1.
_DEFAULTS = {
    "central": dict(sigma=0.1, n=100, count=100, radius=0.1, radii=(0.02, 0.05, 0.1)),
    "boundary": dict(sigma=0.1, n=100, count=100, radius=0.1, radii=(0.02, 0.05, 0.1)),
    # Sweeps solve thousands of instances, many deliberately ill-conditioned
    # (tiny separations); cap the per-solve budget by default.
    "separation": dict(sigma=0.1, n=50, count=20, radius=0.1, radii=(0.1,),
                       solver={"max_iters": 15, "fc_max_iters": 1500}),
    "noise": dict(sigma=0.1, n=50, count=20, radius=0.1, radii=(0.1,), noise_sigma=0.1,
                  solver={"max_iters": 15, "fc_max_iters": 1500}),
    "certify": dict(sigma=0.1, n=100, n_random=1000),
    "lemmas": dict(max_order=6, mc_draws=10_000, m_values=(1, 2, 3)),
    "demo2d": dict(sigma=0.05, n=32, count=1, n_sources=10, noise_sigma=0.02),
}

_ALLOWED_KEYS = {
    "central": {"sigma", "n", "count", "radius", "radii", "tau", "solver"},
    "boundary": {"sigma", "n", "count", "radius", "radii", "tau", "solver"},
    "separation": {"sigma", "n", "count", "radius", "radii", "tau", "solver",
                   "separations", "separation"},
    "noise": {"sigma", "n", "count", "radius", "radii", "tau", "solver",
              "separations", "separation", "noise_sigma"},
    "certify": {"sigma", "n", "sources", "n_random", "rho"},
    "lemmas": {"max_order", "mc_draws", "m_values"},
    "demo2d": {"sigma", "n", "count", "n_sources", "noise_sigma", "tau", "solver", "radius"},
}
_COMMON_KEYS = {"schema_version", "experiment", "seed", "out"}

_SOLVER_KEYS = {"grid_oversample", "max_iters", "gap_tol", "refine_tol", "merge_tol",
                "prune_tol", "refine_iters", "fc_kkt_tol", "fc_max_iters"}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see README for the JSON schema)."""

    experiment: str
    seed: int
    sigma: float = 0.1
    n: int = 100
    count: int = 100
    radius: float = 0.1
    radii: tuple[float, ...] = (0.1,)
    tau: dict = field(default_factory=lambda: {"policy": "oracle"})
    solver: dict = field(default_factory=dict)
    separations: tuple[float, ...] = ()
    separation: float | None = None
    noise_sigma: float = 0.0
    sources: tuple[float, ...] = ()
    n_random: int = 1000
    rho: float | None = None
    max_order: int = 6
    mc_draws: int = 10_000
    m_values: tuple[int, ...] = (1, 2, 3)
    n_sources: int = 10
    out: str | None = None


def _default_separations(sigma: float) -> tuple[float, ...]:
    return tuple(round(0.1 * k, 10) * sigma for k in range(1, 21))


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Load and validate a JSON experiment config; unknown keys are rejected."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    allowed = _COMMON_KEYS | _ALLOWED_KEYS[exp]
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {exp!r}: {sorted(unknown)}")
    if "seed" not in raw and seed_override is None:
        raise ConfigError("seed is mandatory (config key 'seed' or --seed)")

    merged = dict(_DEFAULTS[exp])
    for k, v in raw.items():
        if k in ("schema_version", "experiment"):
            continue
        if k == "solver" and isinstance(v, dict):
            merged["solver"] = {**merged.get("solver", {}), **v}
        else:
            merged[k] = v
    if seed_override is not None:
        merged["seed"] = seed_override
    merged.setdefault("seed", 0)

    tau = merged.get("tau", {"policy": "oracle"})
    if not isinstance(tau, dict) or tau.get("policy") not in ("oracle", "scan"):
        raise ConfigError("tau must be {'policy': 'oracle'} or {'policy': 'scan', ...}")
    unknown_tau = set(tau) - {"policy", "points", "lo", "hi"}
    if unknown_tau:
        raise ConfigError(f"unknown tau keys: {sorted(unknown_tau)}")
    solver = merged.get("solver", {})
    unknown_solver = set(solver) - _SOLVER_KEYS
    if unknown_solver:
        raise ConfigError(f"unknown solver keys: {sorted(unknown_solver)}")

    if exp in ("separation", "noise") and not merged.get("separations"):
        merged["separations"] = _default_separations(merged["sigma"])
    for tuple_key in ("radii", "separations", "m_values", "sources"):
        if tuple_key in merged and merged[tuple_key] is not None:
            merged[tuple_key] = tuple(merged[tuple_key])

    try:
        cfg = ExperimentConfig(experiment=exp, **{k: v for k, v in merged.items()
                                                  if k in ExperimentConfig.__dataclass_fields__})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    _validate_ranges(cfg)
    return cfg


def _validate_ranges(cfg: ExperimentConfig):
    if cfg.sigma <= 0:
        raise ConfigError("sigma must be positive")
    if cfg.n < 1 or cfg.count < 1:
        raise ConfigError("n and count must be positive")
    if cfg.radius <= 0 or any(r <= 0 for r in cfg.radii):
        raise ConfigError("tolerance radii must be positive")
    if cfg.experiment in ("separation", "noise"):
        if any(d <= 0 for d in cfg.separations):
            raise ConfigError("separations must be positive")
    if cfg.noise_sigma < 0:
        raise ConfigError("noise_sigma must be nonnegative")
    if cfg.experiment == "certify" and len(cfg.sources) == 0:
        raise ConfigError("certify needs a nonempty 'sources' list")


def _config_echo(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d.pop("out", None)
    return d


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def _population_spec(cfg: ExperimentConfig, kind: str, separation=None,
                     noise_sigma: float = 0.0) -> PopulationSpec:
    return PopulationSpec(
        kind=kind,
        count=cfg.count,
        sigma=cfg.sigma,
        n=cfg.n,
        seed=cfg.seed,
        separation=separation,
        n_sources=cfg.n_sources if kind == "smlm2d" else 5,
        noise_sigma=noise_sigma,
    )


def _dataset_dict(cfg: ExperimentConfig, spec: PopulationSpec) -> dict:
    items = gen_population(spec)
    records = []
    for config, obs in items:
        records.append({
            "locations": config.locations.tolist(),
            "amplitudes": config.amplitudes.tolist(),
            "values": obs.values.tolist(),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": spec.kind,
        "sigma": spec.sigma,
        "n": spec.n,
        "count": spec.count,
        "seed": spec.seed,
        "noise_sigma": spec.noise_sigma,
        "separation": spec.separation,
        "records": records,
    }


def _sampling_for(kind: str, n: int) -> SamplingMeasure:
    if kind == "smlm2d":
        centers = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(centers, centers, indexing="ij")
        return SamplingMeasure(np.column_stack([X.ravel(), Y.ravel()]), np.ones(n * n))
    return SamplingMeasure(np.linspace(0.0, 1.0, n), np.ones(n))


def _dataset_sampling(ds: dict) -> SamplingMeasure:
    return _sampling_for(ds["kind"], ds["n"])


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Write the dataset described by the config; returns the file path."""
    if cfg.experiment in ("central", "boundary"):
        spec = _population_spec(cfg, cfg.experiment)
    elif cfg.experiment in ("separation", "noise"):
        d = cfg.separation if cfg.separation is not None else cfg.separations[0]
        spec = _population_spec(cfg, "pair", separation=d)
    elif cfg.experiment == "demo2d":
        spec = _population_spec(cfg, "smlm2d", noise_sigma=cfg.noise_sigma)
    else:
        raise ConfigError(f"experiment {cfg.experiment!r} does not define a dataset")
    path = out_dir / "dataset.json"
    _write_json(path, _dataset_dict(cfg, spec))
    return path


# ---------------------------------------------------------------------------
# solving and scoring
# ---------------------------------------------------------------------------


def _solver_options(cfg_solver: dict, tau: float) -> SolverOptions:
    return SolverOptions(tau=tau, **cfg_solver)


def _oracle_tau(truth: SourceConfiguration, psf, P, weighted: bool) -> float:
    if len(truth) == 0:
        return 1.0
    if weighted:
        return float(np.asarray(weight(psf, P, truth.locations)) @ truth.amplitudes)
    return float(np.sum(truth.amplitudes))


def _solve_record(args) -> dict:
    """Solve one image; top-level function so process pools can pickle it."""
    (locations, amplitudes, values, kind, sigma, n, weighted,
     tau, radii, solver_overrides) = args
    dim = 2 if kind == "smlm2d" else 1
    psf = GaussianPSF(sigma=sigma, dim=dim)
    sampling = _sampling_for(kind, n)
    domain = Domain.box((0.0, 1.0), (0.0, 1.0)) if dim == 2 else Domain.interval(0.0, 1.0)
    obs = ObservationSet(sampling, np.asarray(values, dtype=float))
    w_fn = make_weight_fn(psf, sampling) if weighted else unit_weight_fn(dim)
    opts = _solver_options(solver_overrides, tau)
    result = solve(obs, psf, w_fn, domain, opts)
    truth = np.asarray(locations, dtype=float)
    est = np.asarray(result.measure.locations)
    scores = {}
    for r in radii:
        if len(truth) == 0 and len(est) == 0:
            scores[f"{r:g}"] = 1.0  # nothing to find, nothing found
        else:
            scores[f"{r:g}"] = greedy_match(truth, est, r).fscore
    return {
        "true_locations": np.asarray(locations).tolist(),
        "true_amplitudes": np.asarray(amplitudes).tolist(),
        "est_locations": est.tolist(),
        "est_masses": result.measure.masses.tolist(),
        "tau": tau,
        "objective": float(result.objective_trace[-1]),
        "gap": result.final_gap,
        "iterations": result.iterations,
        "converged": result.converged,
        "fscore": scores,
    }


def _run_dataset(ds: dict, cfg: ExperimentConfig, weighted: bool, tau_multiplier: float | None,
                 jobs: int) -> list[dict]:
    psf = GaussianPSF(sigma=ds["sigma"], dim=2 if ds["kind"] == "smlm2d" else 1)
    sampling = _dataset_sampling(ds)
    tasks = []
    for rec in ds["records"]:
        truth = SourceConfiguration(np.asarray(rec["locations"]), np.asarray(rec["amplitudes"]))
        tau = _oracle_tau(truth, psf, sampling, weighted)
        if tau_multiplier is not None:
            tau *= tau_multiplier
        tasks.append((rec["locations"], rec["amplitudes"], rec["values"], ds["kind"],
                      ds["sigma"], ds["n"], weighted, tau, list(cfg.radii), dict(cfg.solver)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_solve_record, tasks))
    return [_solve_record(t) for t in tasks]


def _aggregates(per_image: list[dict], radii) -> dict:
    mean_f, median_f = {}, {}
    for r in radii:
        key = f"{r:g}"
        fs = [rec["fscore"][key] for rec in per_image]
        mean_f[key] = float(np.mean(fs))
        median_f[key] = float(np.median(fs))
    return {"mean_f": mean_f, "median_f": median_f}


def _tau_multipliers(tau_cfg: dict) -> list[float]:
    points = max(int(tau_cfg.get("points", 15)), 1)
    lo = float(tau_cfg.get("lo", 0.1))
    hi = float(tau_cfg.get("hi", 10.0))
    return list(np.geomspace(lo, hi, points))


def cmd_solve(cfg: ExperimentConfig, dataset_path: Path, out_dir: Path,
              weighted: bool = True, jobs: int = 1) -> dict:
    """Solve every image of a dataset; write and return the run record."""
    ds = json.loads(Path(dataset_path).read_text())
    if ds.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("dataset schema_version mismatch")
    for key in ("sigma", "n"):
        if not math.isclose(ds[key], getattr(cfg, key)):
            raise ConfigError(f"dataset/config mismatch on {key}: {ds[key]} vs {getattr(cfg, key)}")

    start = time.perf_counter()
    if cfg.tau["policy"] == "oracle":
        per_image = _run_dataset(ds, cfg, weighted, None, jobs)
        best_mult = None
    else:
        best_mult, best_mean, per_image = None, -1.0, None
        for mult in _tau_multipliers(cfg.tau):
            candidate = _run_dataset(ds, cfg, weighted, mult, jobs)
            mean_f = float(np.mean([rec["fscore"][f"{cfg.radius:g}"] for rec in candidate]))
            if mean_f > best_mean:
                best_mult, best_mean, per_image = mult, mean_f, candidate
    elapsed = time.perf_counter() - start

    record = {
        "schema_version": SCHEMA_VERSION,
        "config": _config_echo(cfg),
        "weighted": weighted,
        "tau_policy": cfg.tau["policy"],
        "tau_multiplier": best_mult,
        "per_image": per_image,
        "aggregates": _aggregates(per_image, cfg.radii),
        "matching": {"edge_rule": "distance strictly below radius", "order": TIE_BREAK},
    }
    _write_json(out_dir / ("run_weighted.json" if weighted else "run_unweighted.json"), record)
    print(f"solve: {len(per_image)} images in {elapsed:.2f}s; "
          f"mean F = {record['aggregates']['mean_f']}", file=sys.stderr)
    return record


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path, weighted: bool = True, jobs: int = 1) -> Path:
    """Separation or noise sweep; writes sweep.csv with one row per value."""
    if cfg.experiment not in ("separation", "noise"):
        raise ConfigError("sweep needs a separation or noise experiment")
    noisy = cfg.experiment == "noise"
    rows = []
    start = time.perf_counter()
    for si, d in enumerate(cfg.separations):
        spec = _population_spec(cfg, "pair", separation=d)
        ds = _dataset_dict(cfg, spec)
        if noisy and cfg.noise_sigma > 0:
            for ii, rec in enumerate(ds["records"]):
                obs = ObservationSet(_dataset_sampling(ds), np.asarray(rec["values"]))
                seed = int(np.random.SeedSequence((cfg.seed, si, ii)).generate_state(1)[0])
                rec["values"] = add_noise(obs, cfg.noise_sigma, seed).values.tolist()
            ds["noise_sigma"] = cfg.noise_sigma
        key = f"{cfg.radius:g}"
        if cfg.tau["policy"] == "scan":
            best = None
            for mult in _tau_multipliers(cfg.tau):
                per_image = _run_dataset(ds, cfg, weighted, mult, jobs)
                fs = [rec["fscore"][key] for rec in per_image]
                if best is None or np.mean(fs) > best[0]:
                    best = (float(np.mean(fs)), float(np.std(fs)))
            mean_f, std_f = best
        else:
            per_image = _run_dataset(ds, cfg, weighted, None, jobs)
            fs = [rec["fscore"][key] for rec in per_image]
            mean_f, std_f = float(np.mean(fs)), float(np.std(fs))
        rows.append((d, mean_f, std_f, cfg.count))
        print(f"sweep {cfg.experiment}: d={d:g} mean F={mean_f:.4f}", file=sys.stderr)
    elapsed = time.perf_counter() - start
    print(f"sweep: {len(rows)} values in {elapsed:.2f}s", file=sys.stderr)

    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep_value", "mean_f", "std_f", "n_images"])
        for row in rows:
            writer.writerow([repr(float(row[0])), repr(row[1]), repr(row[2]), row[3]])
    return path


# ---------------------------------------------------------------------------
# certification and lemmas
# ---------------------------------------------------------------------------


def cmd_certify(cfg: ExperimentConfig, out_dir: Path) -> tuple[dict, int]:
    """Check conditions and build the certificate; returns (report, exit code)."""
    psf = GaussianPSF(sigma=cfg.sigma, dim=1)
    domain = Domain.interval(0.0, 1.0)
    P = SamplingMeasure.uniform_grid(cfg.n, domain)
    ke = KernelEval(psf, P)
    sources = np.asarray(cfg.sources, dtype=float)

    report: dict = {"schema_version": SCHEMA_VERSION, "config": _config_echo(cfg)}
    code = 0
    conditions = check_conditions(ke, sources, domain, cfg.n_random, rho=cfg.rho, seed=cfg.seed)
    report["conditions"] = {
        "positivity_min_w": conditions.positivity_min_w,
        "independence_min_singular": conditions.independence_min_singular,
        "determinantal_min_absdet": conditions.determinantal_min_absdet,
        "determinantal_sign_consistent": conditions.determinantal_sign_consistent,
        "samples_tested": conditions.samples_tested,
        "warnings": list(conditions.warnings),
    }
    try:
        cert = solve_certificate(ke, sources, domain)
    except CertificateConditionError as exc:
        report["certificate"] = {"error": str(exc)}
        code = 3
    else:
        mr = cert.margin_report
        report["certificate"] = {
            "locations": cert.locations.tolist(),
            "alpha": cert.alpha.tolist(),
            "beta": cert.beta.tolist(),
            "branch": cert.branch,
            "valid": mr.valid,
            "interp_value_rel": mr.interp_value_rel,
            "interp_deriv_abs": mr.interp_deriv_abs,
            "min_margin_off_support": mr.min_margin_off_support,
            "max_overshoot": mr.max_overshoot,
            "n_grid": mr.n_grid,
        }
        if not mr.valid:
            code = 3
    _write_json(out_dir / "certificate.json", report)
    return report, code


def cmd_verify_lemmas(cfg: ExperimentConfig, out_dir: Path) -> tuple[list, int]:
    """Run the exact identity checks and the determinant Monte-Carlo."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    rows = []
    code = 0
    from fractions import Fraction

    shifts = [Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 10))) for _ in range(max(cfg.max_order, 1))]
    try:
        rep = f_sequence_check(cfg.max_order, shifts)
        rows.append(("f-recursion / sum-of-squares", f"orders 0..{cfg.max_order}", "PASS",
                     f"constant squares {[str(c) for c in rep.constant_squares]}"))
    except LemmaVerificationError as exc:
        rows.append(("f-recursion / sum-of-squares", f"orders 0..{cfg.max_order}", "FAIL", str(exc)))
        code = 4

    draws_per_m = max(cfg.mc_draws // max(len(cfg.m_values), 1), 1)
    for m in cfg.m_values:
        mc = tsys_det_montecarlo(m, draws_per_m, seed=cfg.seed)
        ok = mc.sign_consistent and mc.min_abs_det > 0
        rows.append((f"collocation determinant M={m}", f"{draws_per_m} draws",
                     "PASS" if ok else "FAIL",
                     f"min |det| = {mc.min_abs_det:.3e}, sign {mc.sign:+d}"))
        if not ok:
            code = 4

    width = max(len(r[0]) for r in rows) + 2
    for name, scope, status, detail in rows:
        print(f"{name:<{width}} {scope:<18} {status:<6} {detail}")
    _write_json(out_dir / "lemmas.json", {
        "schema_version": SCHEMA_VERSION,
        "config": _config_echo(cfg),
        "results": [{"check": r[0], "scope": r[1], "status": r[2], "detail": r[3]} for r in rows],
    })
    return rows, code


def cmd_demo2d(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> dict:
    """Simulate a 2D frame population, solve it, and emit point CSVs."""
    spec = _population_spec(cfg, "smlm2d", noise_sigma=cfg.noise_sigma)
    ds = _dataset_dict(cfg, spec)
    pixel = 1.0 / cfg.n
    cfg_scored = ExperimentConfig(**{**asdict(cfg), "radius": pixel / 3.0,
                                     "radii": (pixel / 3.0,)})
    per_image = _run_dataset(ds, cfg_scored, True, None, jobs)
    record = {
        "schema_version": SCHEMA_VERSION,
        "config": _config_echo(cfg_scored),
        "weighted": True,
        "tau_policy": cfg.tau["policy"],
        "tau_multiplier": None,
        "per_image": per_image,
        "aggregates": _aggregates(per_image, cfg_scored.radii),
        "matching": {"edge_rule": "distance strictly below radius", "order": TIE_BREAK},
    }
    _write_json(out_dir / "run2d.json", record)

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "true_points.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "x", "y", "amplitude"])
        for i, rec in enumerate(per_image):
            for loc, amp in zip(rec["true_locations"], rec["true_amplitudes"]):
                writer.writerow([i, repr(loc[0]), repr(loc[1]), repr(amp)])
    with open(out_dir / "est_points.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "x", "y", "mass"])
        for i, rec in enumerate(per_image):
            for loc, mass in zip(rec["est_locations"], rec["est_masses"]):
                writer.writerow([i, repr(loc[0]), repr(loc[1]), repr(mass)])
    return record


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridfree",
                                     description="Gridless point-source recovery toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "solve", "sweep", "certify", "verify-lemmas", "demo2d"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel per-image solves")
        p.add_argument("--unweighted", action="store_true",
                       help="solve with w(t) = 1 instead of the sampling weight")
        if name == "solve":
            p.add_argument("--dataset", default=None, help="dataset path (default <out>/dataset.json)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        out_dir = Path(args.out if cfg.out is None else cfg.out)
        if args.command == "simulate":
            path = cmd_simulate(cfg, out_dir)
            print(f"wrote {path}", file=sys.stderr)
        elif args.command == "solve":
            dataset = Path(args.dataset) if args.dataset else out_dir / "dataset.json"
            cmd_solve(cfg, dataset, out_dir, weighted=not args.unweighted, jobs=args.jobs)
        elif args.command == "sweep":
            cmd_sweep(cfg, out_dir, weighted=not args.unweighted, jobs=args.jobs)
        elif args.command == "certify":
            report, code = cmd_certify(cfg, out_dir)
            print(json.dumps(report["certificate"], sort_keys=True, indent=2))
            return code
        elif args.command == "verify-lemmas":
            _, code = cmd_verify_lemmas(cfg, out_dir)
            return code
        elif args.command == "demo2d":
            record = cmd_demo2d(cfg, out_dir, jobs=args.jobs)
            print(f"mean F = {record['aggregates']['mean_f']}", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CertificateConditionError as exc:
        print(f"condition failure: {exc}", file=sys.stderr)
        return 3
    except LemmaVerificationError as exc:
        print(f"lemma failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
