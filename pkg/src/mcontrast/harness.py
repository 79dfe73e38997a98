"""Experiment runner: seeded consistency studies, audits, and artifacts.

Configs come from flat dotted-key text files or JSON; every run is fully
determined by the config and master seed, replicate by replicate, so output
files are byte-reproducible (wall-clock fields excepted) regardless of the
worker pool size.  Artifacts are `report.csv`, `report.json`, `audit.json`,
and `convergence.svg` in the chosen output directory.
"""

import csv
import dataclasses
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .contrasts import get_contrast, psi, theta, theta_gap
from .errors import AdmissibilityError
from .estimation import (DEFAULT_GRID_RESOLUTION, DEFAULT_SUPPORT_SIZE,
                         EmpiricalContrast, fit_grid, fit_mixture_em,
                         fit_mixture_fw)
from .models import (MixingMeasure, MixtureFamily, ParametricFamily, Rng,
                     build_model, wasserstein1)
from .separation import AStarSpec, check_A2_over_grid

DEFAULT_N_SCHEDULE = (100, 316, 1000, 3162, 10000)
DEFAULT_REPLICATES = 20

# mixture truths used when the config does not spell one out
DEFAULT_MIXTURE_TRUTH = {
    "gaussian_mixture": ((-1.0, 1.0), (0.3, 0.7)),
    "exponential_mixture": ((0.5, 2.0), (0.4, 0.6)),
}

# key component separating audit sampling from the fit replicate streams
_AUDIT_STREAM = 2**32

_SERIALIZE_PRUNE = 1e-10


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment, seeding included."""

    model_id: str
    contrast_id: str = "log"
    true_theta: tuple = None
    true_atoms: tuple = None
    true_weights: tuple = None
    n_schedule: tuple = DEFAULT_N_SCHEDULE
    replicates: int = DEFAULT_REPLICATES
    master_seed: int = 0
    opt_kind: str = None            # None: grid for parametric, em for mixture
    grid_resolution: int = DEFAULT_GRID_RESOLUTION
    support_size: int = DEFAULT_SUPPORT_SIZE
    tol: float = None               # None: 1/n per sample size
    max_iter: int = None            # None: optimizer default
    lam: float = 0.5
    mc_budget: int = 100_000
    a_star_kind: str = None         # None: constant for parametric, contraction for mixture
    sep_radius: float = 0.25
    sep_net_size: int = 32
    sep_grid_size: int = None       # None: 16 parametric, 12 mixture

    def __post_init__(self):
        schedule = tuple(int(n) for n in self.n_schedule)
        if len(schedule) == 0:
            raise ValueError("n_schedule must be nonempty")
        if any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ValueError("n_schedule must be strictly increasing")
        if any(n < 1 for n in schedule):
            raise ValueError("sample sizes must be positive")
        object.__setattr__(self, "n_schedule", schedule)
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.opt_kind not in (None, "grid", "em", "fw"):
            raise ValueError(f"unknown optimizer kind {self.opt_kind!r}")
        if self.a_star_kind not in (None, "contraction", "constant", "identity"):
            raise ValueError(f"unknown attractor kind {self.a_star_kind!r}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must be in (0, 1)")
        for field in ("true_theta", "true_atoms", "true_weights"):
            value = getattr(self, field)
            if value is not None:
                object.__setattr__(self, field,
                                   tuple(float(v) for v in np.atleast_1d(value)))

    @classmethod
    def from_mapping(cls, mapping) -> "ExperimentConfig":
        kwargs = {}
        unknown = []
        for key, value in mapping.items():
            field = _CONFIG_KEYS.get(key)
            if field is None:
                unknown.append(key)
            else:
                kwargs[field] = value
        if unknown:
            known = ", ".join(sorted(_CONFIG_KEYS))
            raise ValueError(
                f"unknown config keys {sorted(unknown)}; known keys: {known}")
        if "model_id" not in kwargs:
            raise ValueError("config must set model.id")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_mapping(load_config_mapping(path))


_CONFIG_KEYS = {
    "model.id": "model_id",
    "contrast.id": "contrast_id",
    "truth.theta": "true_theta",
    "truth.atoms": "true_atoms",
    "truth.weights": "true_weights",
    "run.n_schedule": "n_schedule",
    "run.replicates": "replicates",
    "run.master_seed": "master_seed",
    "opt.kind": "opt_kind",
    "opt.grid_resolution": "grid_resolution",
    "opt.support_size": "support_size",
    "opt.tol": "tol",
    "opt.max_iter": "max_iter",
    "sep.lambda": "lam",
    "sep.mc_budget": "mc_budget",
    "sep.a_star": "a_star_kind",
    "sep.radius": "sep_radius",
    "sep.net_size": "sep_net_size",
    "sep.grid_size": "sep_grid_size",
}


def _flatten(mapping, prefix=""):
    flat = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def parse_kv_text(text: str) -> dict:
    """Parse ``key = value`` lines; values are JSON fragments when they parse.

    Blank lines and ``#`` comments are skipped.  ``run.n_schedule = [100, 1000]``
    therefore yields a list while ``model.id = gaussian_location`` stays a
    string.
    """
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in mapping:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        try:
            mapping[key] = json.loads(value)
        except json.JSONDecodeError:
            mapping[key] = value
    return mapping


def load_config_mapping(path) -> dict:
    """Read a config file: dotted-key text, or JSON (flat or nested)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("JSON config must be an object")
        return _flatten(data)
    return parse_kv_text(text)


def build_family(config: ExperimentConfig):
    family = build_model(config.model_id)
    contrast = get_contrast(config.contrast_id)
    return family, contrast


def build_truth(config: ExperimentConfig, family):
    if isinstance(family, ParametricFamily):
        if config.true_theta is not None:
            truth = np.asarray(config.true_theta, dtype=float)
        else:
            truth = family.true_theta
        family.require(truth)
        return truth
    if config.true_atoms is not None or config.true_weights is not None:
        if config.true_atoms is None or config.true_weights is None:
            raise ValueError("truth.atoms and truth.weights must be set together")
        atoms, weights = config.true_atoms, config.true_weights
    else:
        atoms, weights = DEFAULT_MIXTURE_TRUTH[config.model_id]
    truth = MixingMeasure(np.asarray(atoms, float), np.asarray(weights, float))
    if not truth.is_probability:
        raise ValueError("the data-generating truth must be a probability measure")
    lo, hi = family.z_domain
    if truth.atoms.min() < lo or truth.atoms.max() > hi:
        raise ValueError("truth atoms fall outside the model's latent domain")
    return truth


def resolved_opt_kind(config: ExperimentConfig, family) -> str:
    if config.opt_kind is not None:
        kind = config.opt_kind
    else:
        kind = "grid" if isinstance(family, ParametricFamily) else "em"
    parametric = isinstance(family, ParametricFamily)
    if kind == "grid" and not parametric:
        raise ValueError("grid optimizer applies to parametric families only")
    if kind in ("em", "fw") and parametric:
        raise ValueError(f"{kind} optimizer applies to mixture families only")
    return kind


@dataclass(frozen=True)
class FitRecord:
    """One (n, replicate) cell of a consistency experiment."""

    n: int
    replicate: int
    distance: float = None
    mass_deficit: float = None
    certified_gap: float = None
    m_n: float = None
    wall_ms: float = None
    iterations: int = None
    converged: bool = None
    stop_reason: str = None
    theta_hat: object = None
    failed: bool = False
    error: str = None


CSV_COLUMNS = ("n", "replicate", "distance", "mass_deficit",
               "certified_gap", "m_n", "wall_ms")


def _serialize_theta(theta_hat):
    if isinstance(theta_hat, MixingMeasure):
        pruned = theta_hat.pruned(_SERIALIZE_PRUNE)
        return {"atoms": [float(a) for a in pruned.atoms],
                "weights": [float(w) for w in pruned.weights]}
    return [float(v) for v in np.atleast_1d(np.asarray(theta_hat, float))]


def run_single_fit(config: ExperimentConfig, n: int, replicate: int) -> FitRecord:
    """Fit one seeded replicate and measure it against the truth.

    The draw is seeded by the key path (master_seed, n, replicate) so any
    cell can be recomputed in isolation.  An optimizer rejecting the
    contrast yields a failed record, not an exception.
    """
    family, contrast = build_family(config)
    truth = build_truth(config, family)
    rng = Rng(config.master_seed, n, replicate)
    x = family.sample(truth, n, rng)
    ec = EmpiricalContrast(contrast, family, x)
    tol = config.tol if config.tol is not None else 1.0 / n
    start = time.perf_counter()
    try:
        kind = resolved_opt_kind(config, family)
        if kind == "grid":
            fit = fit_grid(ec, resolution=config.grid_resolution)
        else:
            lo, hi = family.z_domain
            grid = np.linspace(lo, hi, config.support_size)
            fitter = fit_mixture_em if kind == "em" else fit_mixture_fw
            if config.max_iter is None:
                fit = fitter(ec, support_grid=grid, tol=tol)
            else:
                fit = fitter(ec, support_grid=grid, tol=tol,
                             max_iter=config.max_iter)
    except AdmissibilityError as exc:
        wall_ms = (time.perf_counter() - start) * 1e3
        return FitRecord(n=n, replicate=replicate, wall_ms=wall_ms,
                         failed=True, error=str(exc))
    wall_ms = (time.perf_counter() - start) * 1e3

    if isinstance(family, ParametricFamily):
        theta_hat = np.asarray(fit.theta_hat, dtype=float)
        distance = float(np.linalg.norm(theta_hat - truth))
        mass_deficit = float(abs(1.0 - family.total_mass(theta_hat)))
    else:
        theta_hat = fit.theta_hat
        mass = theta_hat.mass
        mass_deficit = float(abs(1.0 - mass))
        if mass > 0:
            normalized = MixingMeasure(theta_hat.atoms, theta_hat.weights / mass)
            distance = float(wasserstein1(normalized, truth))
        else:
            distance = float(wasserstein1(MixingMeasure.dirac(truth.atoms[0]),
                                          truth))
    return FitRecord(
        n=n, replicate=replicate,
        distance=distance,
        mass_deficit=mass_deficit,
        certified_gap=float(fit.gap_bound),
        m_n=float(fit.m_n_value),
        wall_ms=float(wall_ms),
        iterations=int(fit.iterations),
        converged=bool(fit.converged),
        stop_reason=fit.stop_reason,
        theta_hat=_serialize_theta(fit.theta_hat),
    )


def _task(args) -> FitRecord:
    config, n, replicate = args
    return run_single_fit(config, n, replicate)


@dataclass(frozen=True)
class ExperimentReport:
    """All records of a consistency run plus per-n summary statistics."""

    config: object
    records: tuple
    aggregates: tuple

    def records_for(self, n: int):
        return [r for r in self.records if r.n == n]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in self.records:
            row = []
            for col in CSV_COLUMNS:
                value = getattr(rec, col)
                if value is None:
                    row.append("")
                elif col in ("n", "replicate"):
                    row.append(str(value))
                else:
                    row.append(repr(float(value)))
            writer.writerow(row)
        return out.getvalue()

    def to_json_dict(self) -> dict:
        config = self.config
        if dataclasses.is_dataclass(config):
            config = dataclasses.asdict(config)
        return {
            "config": config,
            "aggregates": [dict(a) for a in self.aggregates],
            "records": [dataclasses.asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> dict:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out_dir / "report.csv", "json": out_dir / "report.json"}
        paths["csv"].write_text(self.to_csv())
        paths["json"].write_text(self.to_json())
        return paths

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExperimentReport":
        records = tuple(FitRecord(**rec) for rec in data.get("records", ()))
        aggregates = tuple(data.get("aggregates", ()))
        return cls(config=data.get("config"), records=records,
                   aggregates=aggregates)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentReport":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _aggregate(records) -> tuple:
    by_n = {}
    for rec in records:
        by_n.setdefault(rec.n, []).append(rec)
    aggregates = []
    for n in sorted(by_n):
        cell = by_n[n]
        distances = np.array([r.distance for r in cell if not r.failed])
        gaps = np.array([r.certified_gap for r in cell if not r.failed])
        walls = np.array([r.wall_ms for r in cell if r.wall_ms is not None])
        agg = {"n": n,
               "fitted": int(distances.size),
               "failed": int(sum(r.failed for r in cell))}
        if distances.size:
            agg["median_distance"] = float(np.median(distances))
            agg["q10_distance"] = float(np.quantile(distances, 0.10))
            agg["q90_distance"] = float(np.quantile(distances, 0.90))
            agg["median_certified_gap"] = float(np.median(gaps))
        if walls.size:
            agg["mean_wall_ms"] = float(walls.mean())
        aggregates.append(agg)
    return tuple(aggregates)


def run_consistency(config: ExperimentConfig, out_dir=None,
                    threads: int = 1) -> ExperimentReport:
    """Run the full replicated experiment described by ``config``.

    Tasks are independent (one per (n, replicate) cell, each with its own
    derived seed) and may run in a process pool; results are ordered by
    (n, replicate), so the report does not depend on scheduling.  When
    ``out_dir`` is given, `report.csv` and `report.json` are written there.
    """
    family, _ = build_family(config)
    resolved_opt_kind(config, family)      # fail fast on a bad pairing
    build_truth(config, family)
    tasks = [(config, n, r)
             for n in config.n_schedule for r in range(config.replicates)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_task, tasks))
    else:
        records = [_task(t) for t in tasks]
    records.sort(key=lambda r: (r.n, r.replicate))
    report = ExperimentReport(config=config, records=tuple(records),
                              aggregates=_aggregate(records))
    if out_dir is not None:
        report.write(out_dir)
    return report


def _parametric_audit_grid(family, theta_star, size: int, radius: float):
    if family.dim != 1:
        raise ValueError("built-in audit grids cover scalar parameters only")
    center = float(np.atleast_1d(theta_star)[0])
    lo = float(family.theta_lower[0])
    hi = float(family.theta_upper[0])
    half = (size + 1) // 2
    magnitudes = np.linspace(max(2.0 * radius, 0.5), 2.0, half)
    candidates = np.concatenate([center - magnitudes, center + magnitudes])
    candidates = np.clip(candidates, lo, hi)
    keep = np.abs(candidates - center) > radius
    grid = sorted(set(np.round(candidates[keep], 12)))
    if not grid:
        raise ValueError("no admissible audit grid points inside the box")
    return [np.array([g]) for g in grid[:size]]


def _mixture_audit_grid(family, theta_star, size: int, radius: float):
    lo, hi = family.z_domain
    margin = 0.05 * (hi - lo)
    zs = np.linspace(lo + margin, hi - margin, 3 * size)
    exclusion = max(radius, 0.25)
    candidates = [MixingMeasure.dirac(float(z)) for z in zs
                  if wasserstein1(MixingMeasure.dirac(float(z)), theta_star)
                  > exclusion]
    if not candidates:
        raise ValueError("no audit grid point is far enough from the truth")
    if len(candidates) <= size:
        return candidates
    idx = np.round(np.linspace(0, len(candidates) - 1, size)).astype(int)
    return [candidates[i] for i in idx]


def audit_theta_grid(config: ExperimentConfig, family, truth):
    size = config.sep_grid_size
    if size is None:
        size = 16 if isinstance(family, ParametricFamily) else 12
    if isinstance(family, ParametricFamily):
        return _parametric_audit_grid(family, truth, size, config.sep_radius)
    return _mixture_audit_grid(family, truth, size, config.sep_radius)


def run_separation_audit(config: ExperimentConfig, out_dir=None):
    """Sweep the separation conditions for the configured model.

    The attractor defaults to the constant truth map for parametric
    families and to the contraction for mixtures; the grid spans the
    parameter box (or Dirac measures over the latent domain) while keeping
    clear of the truth.  Writes `audit.json` when ``out_dir`` is given.
    """
    family, contrast = build_family(config)
    truth = build_truth(config, family)
    kind = config.a_star_kind
    if kind is None:
        kind = "constant" if isinstance(family, ParametricFamily) else "contraction"
    a_star = AStarSpec(kind=kind, lam=config.lam)
    grid = audit_theta_grid(config, family, truth)
    rng = Rng(config.master_seed, _AUDIT_STREAM)
    report = check_A2_over_grid(
        contrast, family, truth, a_star, grid,
        neighborhood_radius=config.sep_radius,
        net_size=config.sep_net_size,
        n_mc=config.mc_budget,
        rng=rng)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        (out_dir / "audit.json").write_text(payload)
    return report


def emit_plot(report: ExperimentReport, path) -> Path:
    """Render the convergence trend of ``report`` as a standalone SVG file."""
    from .svgplot import render_convergence

    svg = render_convergence(report)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path


def identity_suite() -> list:
    """Closed-form identities of the built-in generators, as (name, ok, worst).

    Everything here has an independent hand-derived value: the bounded
    family's contrast and gap, the two elementary reference transforms,
    and gap nonpositivity across all built-ins on a log-spaced grid.
    """
    grid = np.geomspace(1e-2, 1e2, 20)
    uu, vv = np.meshgrid(grid, grid, indexing="ij")
    results = []

    c = get_contrast("inv_sq_1p")
    closed = -(uu + vv**2) / (1.0 + vv) ** 2
    err = float(np.max(np.abs(theta(c, uu, vv) - closed)))
    results.append(("inv_sq_1p contrast closed form", err <= 1e-12, err))

    closed_gap = -((vv - uu) ** 2) / ((1.0 + uu) * (1.0 + vv) ** 2)
    err = float(np.max(np.abs(theta_gap(c, uu, vv) - closed_gap)))
    results.append(("inv_sq_1p gap closed form", err <= 1e-12, err))

    err = float(np.max(np.abs(psi(get_contrast("log"), grid) - grid)))
    results.append(("log reference transform is u", err <= 1e-12, err))

    err = float(np.max(np.abs(psi(get_contrast("identity"), grid)
                              - grid**2 / 2.0)))
    results.append(("identity reference transform is u^2/2", err <= 1e-12, err))

    for name in ("log", "identity", "inv_sq_1p", "inv_1p_sq"):
        worst = float(np.max(theta_gap(get_contrast(name), uu, vv)))
        results.append((f"{name} gap nonpositive", worst <= 1e-12, worst))
    return results
