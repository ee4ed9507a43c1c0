"""Experiment driver: strategy + mixing + environment, with exact episode accounting."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import envs
from .mixing import Archive, MixOutcome, mix, mix_extended, sample_generation
from .strategies import ALGORITHMS, make_strategy, shape_fitness

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_HEADER = ("generation", "cum_evals", "mean_fitness", "max_fitness", "min_fitness",
              "reused_total", "reused_im", "reused_eim", "fresh")
MIXING_MODES = ("none", "im", "eim")
DEFAULT_GENERATIONS = {"openes": 1000, "snes": 1000, "cem": 400, "cmaes": 400}


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass
class ExperimentConfig:
    env: str = "CartPole"
    algorithm: str = "snes"
    population: int = 50
    generations: int | None = None
    mixing: str = "none"
    archive_k: int = 5
    sigma: float = 0.25
    lr: float = 0.01
    beta1: float = 0.99
    beta2: float = 0.999
    weight_decay: float = 0.05
    elite_fraction: float = 0.5
    cem_extra_variance: float = 0.01
    cem_extra_decay: float = 0.995
    cem_extra_floor: float = 1e-6
    seeds: list[int] = field(default_factory=lambda: list(range(25)))
    gym_compat: bool = False
    max_steps: int = 200
    threads: int = 1
    out_dir: str = "runs"

    def __post_init__(self):
        self.algorithm = str(self.algorithm).lower()
        self.mixing = str(self.mixing).lower()
        if self.generations is None:
            self.generations = DEFAULT_GENERATIONS.get(self.algorithm, 1000)
        if isinstance(self.seeds, int):
            self.seeds = list(range(self.seeds))
        self.seeds = [int(s) for s in self.seeds]
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.env not in envs.ENV_IDS:
            problems.append(f"env: must be one of {envs.ENV_IDS}, got {self.env!r}")
        if self.algorithm not in ALGORITHMS:
            problems.append(f"algorithm: must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.mixing not in MIXING_MODES:
            problems.append(f"mixing: must be one of {MIXING_MODES}, got {self.mixing!r}")
        if self.population < 2:
            problems.append("population: must be >= 2")
        if self.archive_k < 1:
            problems.append("archive_k: must be >= 1")
        if self.generations < 1:
            problems.append("generations: must be >= 1")
        if not self.sigma > 0:
            problems.append("sigma: must be > 0")
        if not self.lr > 0:
            problems.append("lr: must be > 0")
        if not 0 < self.elite_fraction <= 1:
            problems.append("elite_fraction: must be in (0, 1]")
        if not self.seeds:
            problems.append("seeds: at least one seed required")
        if self.threads < 1:
            problems.append("threads: must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def elite_count(self) -> int:
        return max(1, int(self.population * self.elite_fraction))

    @property
    def archive_capacity(self) -> int:
        return self.archive_k if self.mixing == "eim" else 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {"schema_version": SCHEMA_VERSION, **d}

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(unknown)}")
        for k, v in data.items():
            if isinstance(v, dict) or (isinstance(v, list) and k != "seeds"):
                raise ConfigError(f"{k}: nested values are not allowed")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a flat key: value mapping")
        return cls.from_mapping(data)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    cum_evals: int
    mean_fitness: float
    max_fitness: float
    min_fitness: float
    reused_total: int
    reused_im: int
    reused_eim: int
    fresh: int

    def row(self) -> list[str]:
        return [str(getattr(self, name)) for name in CSV_HEADER]


def _next_generation(pdf, archive: Archive, mode: str, rng, n: int) -> MixOutcome:
    if mode == "none" or len(archive) == 0:
        return sample_generation(pdf, rng, n)
    if mode == "im":
        p_old, g_old = archive[0]
        return mix(pdf, p_old, g_old, rng, n)
    return mix_extended(pdf, archive, rng, n)


def run_one(config: ExperimentConfig, seed: int, threads: int | None = None,
            generations: int | None = None) -> list[GenerationRecord]:
    """Run one seeded optimisation and return one record per generation.

    Only fresh rows are rolled out. Row ``j`` of generation ``g`` uses the
    episode stream ``(seed, g, j)``, so the result does not depend on
    ``threads``.
    """
    env = envs.make_env(config.env, gym_compat=config.gym_compat, max_steps=config.max_steps)
    d = env.policy.d
    n = config.population
    strategy = make_strategy(
        config.algorithm, np.zeros(d), sigma=config.sigma, popsize=n, lr=config.lr,
        beta1=config.beta1, beta2=config.beta2, elite_count=config.elite_count,
        extra_variance=config.cem_extra_variance, extra_decay=config.cem_extra_decay,
        extra_floor=config.cem_extra_floor)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1A9]))
    archive = Archive(config.archive_capacity)
    threads = threads or config.threads
    records = []
    cum = 0
    for g in range(generations or config.generations):
        pdf = strategy.ask()
        outcome = _next_generation(pdf, archive, config.mixing, rng, n)
        gen = outcome.generation
        todo = np.flatnonzero(gen.fresh_mask)
        if todo.size:
            gen.fitness[todo] = envs.evaluate(env, gen.samples[todo], seed, g, todo, threads)
        cum += int(todo.size)
        shaped = shape_fitness(gen.fitness, gen.samples, config.weight_decay)
        strategy.tell(gen.samples, shaped.utilities)
        archive.push(pdf, gen)
        records.append(GenerationRecord(
            g, cum, float(np.mean(gen.fitness)), float(np.max(gen.fitness)),
            float(np.min(gen.fitness)), outcome.reused_count, outcome.reused_im,
            outcome.reused_eim, outcome.fresh_count))
    return records


@dataclass
class RunSummary:
    generations: list[int]
    mean_fitness: list[float]
    ci_half_width: list[float]
    mean_cum_evals: list[float]
    n_seeds: int
    total_samples: int
    reused_total: int
    reused_im: int
    reused_eim: int
    total_reuse_pct: float
    from_im_pct: float
    from_eim_pct: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)


def aggregate(runs: list[list[GenerationRecord]], population: int | None = None) -> RunSummary:
    """Pointwise mean over seeds with a 68% interval (std / sqrt(seeds)).

    Reuse percentages are whole-run totals over all seeds; the IM and EIM
    figures are shares of the total reuse.
    """
    if len(runs) < 2:
        raise ValueError("aggregate needs at least two runs")
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ValueError(f"runs have different lengths: {sorted(lengths)}")
    fit = np.array([[rec.mean_fitness for rec in run] for run in runs])
    cum = np.array([[rec.cum_evals for rec in run] for run in runs], dtype=float)
    k = len(runs)
    ci = fit.std(axis=0, ddof=1) / math.sqrt(k)
    reused = sum(rec.reused_total for run in runs for rec in run)
    r_im = sum(rec.reused_im for run in runs for rec in run)
    r_eim = sum(rec.reused_eim for run in runs for rec in run)
    total = sum(rec.reused_total + rec.fresh for run in runs for rec in run)
    if population is not None and total != population * k * lengths.pop():
        raise ValueError("record counts do not add up to the population size")
    return RunSummary(
        generations=[rec.generation for rec in runs[0]],
        mean_fitness=fit.mean(axis=0).tolist(),
        ci_half_width=ci.tolist(),
        mean_cum_evals=cum.mean(axis=0).tolist(),
        n_seeds=k,
        total_samples=total,
        reused_total=reused,
        reused_im=r_im,
        reused_eim=r_eim,
        total_reuse_pct=100.0 * reused / total if total else 0.0,
        from_im_pct=100.0 * r_im / reused if reused else 0.0,
        from_eim_pct=100.0 * r_eim / reused if reused else 0.0,
    )


def records_to_csv(records: list[GenerationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def read_records(path) -> list[GenerationRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header {header}")
        out = []
        for row in reader:
            vals = dict(zip(CSV_HEADER, row))
            out.append(GenerationRecord(
                int(vals["generation"]), int(vals["cum_evals"]), float(vals["mean_fitness"]),
                float(vals["max_fitness"]), float(vals["min_fitness"]),
                int(vals["reused_total"]), int(vals["reused_im"]), int(vals["reused_eim"]),
                int(vals["fresh"])))
    return out


class ResumeConflict(RuntimeError):
    """Output directory already holds results for this run."""


def seed_csv_name(seed: int) -> str:
    return f"seed_{seed}.csv"


def run_experiment(config: ExperimentConfig, out_dir=None, overwrite: bool = False,
                   threads: int | None = None) -> RunSummary | None:
    """Run every seed, writing ``seed_<s>.csv``, ``config.yaml`` and ``summary.json``."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    existing = [s for s in config.seeds if (out / seed_csv_name(s)).exists()]
    if existing and not overwrite:
        raise ResumeConflict(
            f"{out} already has results for seeds {existing}; use --overwrite")
    (out / "config.yaml").write_text(config.dump())
    runs = []
    for s in config.seeds:
        log.info("%s/%s/%s seed %d", config.env, config.algorithm, config.mixing, s)
        recs = run_one(config, s, threads=threads)
        (out / seed_csv_name(s)).write_text(records_to_csv(recs))
        runs.append(recs)
    (out / "reuse_table.csv").write_text(reuse_table([out]))
    if len(runs) < 2:
        return None
    summary = aggregate(runs, config.population)
    (out / "summary.json").write_text(summary.to_json())
    return summary


REUSE_TABLE_HEADER = ("run", "total_reuse_pct", "from_im_pct", "from_eim_pct")


def reuse_row(runs: list[list[GenerationRecord]]) -> tuple[float, float, float]:
    reused = sum(r.reused_total for run in runs for r in run)
    total = sum(r.reused_total + r.fresh for run in runs for r in run)
    r_im = sum(r.reused_im for run in runs for r in run)
    r_eim = sum(r.reused_eim for run in runs for r in run)
    if total == 0:
        return 0.0, 0.0, 0.0
    return (100.0 * reused / total,
            100.0 * r_im / reused if reused else 0.0,
            100.0 * r_eim / reused if reused else 0.0)


def reuse_table(run_dirs) -> str:
    """Table of whole-run reuse percentages, one row per run directory."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REUSE_TABLE_HEADER)
    for d in run_dirs:
        d = Path(d)
        files = sorted(d.glob("seed_*.csv"))
        if not files:
            raise FileNotFoundError(f"no seed_*.csv files in {d}")
        total, im, eim = reuse_row([read_records(f) for f in files])
        w.writerow([d.name, f"{total:.1f}", f"{im:.1f}", f"{eim:.1f}"])
    return buf.getvalue()
