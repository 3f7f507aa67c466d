"""Experiment orchestration: the seeds x noise-levels sweep and its analysis.

Results are appended to runs.jsonl, one JSON record per completed run, written
atomically so an interrupted sweep resumes by skipping finished (seed, eps)
pairs. Every line carries the config digest and code version; analysis refuses
mixed digests unless forced.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace

from . import __version__
from .analysis import CohortReport, build_cohort_report
from .graphs import DatasetError, generate_synthetic, parse_dataset, split_dataset
from .model import gate_count, save_checkpoint
from .noise import DEFAULT_EPSILONS, DEFAULT_SIGMA_COEFF, NoiseSettings, theoretical_optimal_epsilon
from .training import RunRecord, TrainConfig, init_params, params_digest, train_model

RUN_SCHEMA = "qgnoise-run/1"
WORKERS_ENV_VAR = "QGNOISE_WORKERS"


class DataError(ValueError):
    """Unusable sweep inputs or outputs: bad config, incomplete grid, mixed digests."""


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    split_seed: int = 42
    n_seeds: int = 55
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    sigma_coeff: float = DEFAULT_SIGMA_COEFF
    gate_count: int | None = None  # None: per-molecule exact counting
    train: TrainConfig = field(default_factory=TrainConfig)
    threshold: float = 0.71
    permutation_draws: int = 1000
    output_dir: str = "runs_out"
    workers: int = 1

    def __post_init__(self):
        if self.n_seeds < 1:
            raise DataError("n_seeds must be >= 1")
        if self.workers < 1:
            raise DataError("workers must be >= 1")
        eps = tuple(float(e) for e in self.epsilons)
        if len(eps) != len(set(eps)):
            raise DataError(f"duplicate noise levels in {eps}")
        if sum(1 for e in eps if e == 0.0) != 1:
            raise DataError("epsilons must contain 0.0 exactly once")
        if any(not 0.0 <= e < 1.0 for e in eps):
            raise DataError("every epsilon must lie in [0, 1)")
        object.__setattr__(self, "epsilons", eps)
        if not isinstance(self.dataset, dict) or not (
            ("path" in self.dataset) ^ ("synthetic" in self.dataset)
        ):
            raise DataError('dataset must name exactly one of "path" or "synthetic"')


def load_config(path) -> ExperimentConfig:
    """Read the single-document JSON experiment config."""
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"config {path}: malformed JSON ({exc.msg})") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    noise = raw.get("noise", {})
    gate_override = noise.get("gate_count", "per-molecule")
    if gate_override == "per-molecule":
        gate_override = None
    train_raw = dict(raw.get("train", {}))
    if "hidden_dims" in train_raw:
        train_raw["hidden_dims"] = tuple(train_raw["hidden_dims"])
    analysis = raw.get("analysis", {})
    try:
        train = TrainConfig(**train_raw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid train section: {exc}") from exc
    return ExperimentConfig(
        dataset=raw.get("dataset", {"synthetic": {"count": 200, "seed": 1}}),
        split_seed=int(raw.get("split_seed", 42)),
        n_seeds=int(raw.get("n_seeds", 55)),
        epsilons=tuple(noise.get("epsilons", DEFAULT_EPSILONS)),
        sigma_coeff=float(noise.get("sigma_coeff", DEFAULT_SIGMA_COEFF)),
        gate_count=gate_override,
        train=train,
        threshold=float(analysis.get("threshold", 0.71)),
        permutation_draws=int(analysis.get("permutation_draws", 1000)),
        output_dir=str(raw.get("output_dir", "runs_out")),
        workers=int(raw.get("workers", 1)),
    )


def config_digest(config: ExperimentConfig) -> str:
    """Digest of everything that shapes a single run's numbers.

    n_seeds, output paths, worker counts, and analysis knobs are excluded so
    a sweep can be resumed or extended without invalidating existing lines.
    """
    payload = {
        "dataset": config.dataset,
        "split_seed": config.split_seed,
        "epsilons": list(config.epsilons),
        "sigma_coeff": config.sigma_coeff,
        "gate_count": config.gate_count,
        "train": asdict(config.train),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def resolve_dataset(config: ExperimentConfig):
    if "path" in config.dataset:
        return parse_dataset(config.dataset["path"])
    spec = config.dataset["synthetic"]
    return generate_synthetic(
        count=int(spec.get("count", 200)),
        seed=int(spec.get("seed", 1)),
        max_atoms=int(spec.get("max_atoms", 11)),
    )


# --- sweep -------------------------------------------------------------------

def _checkpoint_path(output_dir: str, init_seed: int, epsilon: float) -> str:
    return os.path.join(
        output_dir, "checkpoints", f"seed_{init_seed}_eps_{int(round(epsilon * 1e6))}.json"
    )


def _execute_run(config: ExperimentConfig, init_seed: int, epsilon: float) -> dict:
    """Train one (seed, epsilon) cell; runs inside a worker process."""
    graphs = resolve_dataset(config)
    split = split_dataset(graphs, seed=config.split_seed)
    train_cfg = replace(config.train, init_seed=init_seed)
    settings = NoiseSettings(
        epsilon=epsilon, sigma_coeff=config.sigma_coeff, gate_count=config.gate_count
    )
    initial_digest = params_digest(init_params(init_seed, train_cfg))
    params, record = train_model(split, settings, train_cfg)
    ckpt = _checkpoint_path(config.output_dir, init_seed, epsilon)
    save_checkpoint(
        ckpt, params,
        seeds={"init_seed": init_seed, "split_seed": config.split_seed, "epsilon": epsilon},
    )
    return {
        "schema": RUN_SCHEMA,
        "status": "ok",
        "code_version": __version__,
        "config_digest": config_digest(config),
        "init_seed": record.init_seed,
        "epsilon": record.epsilon,
        "initial_params_digest": initial_digest,
        "r2_train": record.r2_train,
        "r2_val": record.r2_val,
        "r2_test": record.r2_test,
        "epochs_run": record.epochs_run,
        "early_stopped": record.early_stopped,
        "wall_time": record.wall_time,
        "checkpoint_path": ckpt,
    }


def _sweep_worker(args):
    config_raw, init_seed, epsilon = args
    config = config_from_dict(config_raw)
    return _execute_run(config, init_seed, epsilon)


def _config_to_raw(config: ExperimentConfig) -> dict:
    return {
        "dataset": config.dataset,
        "split_seed": config.split_seed,
        "n_seeds": config.n_seeds,
        "noise": {
            "epsilons": list(config.epsilons),
            "sigma_coeff": config.sigma_coeff,
            "gate_count": "per-molecule" if config.gate_count is None else config.gate_count,
        },
        "train": asdict(config.train),
        "analysis": {
            "threshold": config.threshold,
            "permutation_draws": config.permutation_draws,
        },
        "output_dir": config.output_dir,
        "workers": config.workers,
    }


def read_runs(runs_path) -> list[dict]:
    records = []
    with open(runs_path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{runs_path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if rec.get("schema") == RUN_SCHEMA:
                records.append(rec)
    return records


def run_sweep(config: ExperimentConfig, resume: bool = False, log=None) -> str:
    """Execute the n_seeds x epsilons grid; returns the runs.jsonl path."""
    log = log or (lambda msg: None)
    resolve_dataset(config)  # surface unreadable datasets before any training
    os.makedirs(os.path.join(config.output_dir, "checkpoints"), exist_ok=True)
    runs_path = os.path.join(config.output_dir, "runs.jsonl")
    digest = config_digest(config)
    done: set[tuple[int, float]] = set()
    if os.path.exists(runs_path) and os.path.getsize(runs_path) > 0:
        if not resume:
            raise DataError(f"{runs_path} already has results; pass --resume to continue")
        for rec in read_runs(runs_path):
            if rec.get("config_digest") != digest:
                raise DataError(
                    f"existing results created with config digest {rec.get('config_digest')}, "
                    f"current config digest is {digest}"
                )
            if rec.get("status") == "ok":
                done.add((rec["init_seed"], rec["epsilon"]))
    base = config.train.init_seed
    grid = [
        (base + s, eps)
        for s in range(config.n_seeds)
        for eps in config.epsilons
        if (base + s, eps) not in done
    ]
    log(f"{len(done)} runs already present, {len(grid)} to execute")
    if not grid:
        return runs_path

    workers = int(os.environ.get(WORKERS_ENV_VAR, config.workers))
    raw = _config_to_raw(config)
    started = time.perf_counter()
    finished = 0
    with open(runs_path, "a", encoding="utf-8", newline="\n") as out:

        def emit(record: dict) -> None:
            out.write(json.dumps(record) + "\n")
            out.flush()

        if workers <= 1:
            for seed, eps in grid:
                emit(_guarded_run(raw, seed, eps))
                finished += 1
                log(f"[{finished}/{len(grid)}] seed={seed} eps={eps} "
                    f"({time.perf_counter() - started:.0f}s elapsed)")
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {
                    pool.submit(_sweep_worker, (raw, seed, eps)): (seed, eps)
                    for seed, eps in grid
                }
                for fut in as_completed(futures):
                    seed, eps = futures[fut]
                    try:
                        emit(fut.result())
                    except Exception as exc:  # worker crash: record and continue
                        emit(_failure_record(digest, seed, eps, exc))
                    finished += 1
                    log(f"[{finished}/{len(grid)}] seed={seed} eps={eps} "
                        f"({time.perf_counter() - started:.0f}s elapsed)")
    return runs_path


def _failure_record(digest: str, seed: int, eps: float, exc: Exception) -> dict:
    return {
        "schema": RUN_SCHEMA,
        "status": "failed",
        "code_version": __version__,
        "config_digest": digest,
        "init_seed": seed,
        "epsilon": eps,
        "error": f"{type(exc).__name__}: {exc}",
    }


def _guarded_run(raw: dict, seed: int, eps: float) -> dict:
    try:
        return _sweep_worker((raw, seed, eps))
    except Exception as exc:
        return _failure_record(config_digest(config_from_dict(raw)), seed, eps, exc)


# --- analysis ----------------------------------------------------------------

def collect_records(runs_path, config: ExperimentConfig, force: bool = False):
    """Validate grid completeness and return ({seed: [RunRecord]}, {seed: digest})."""
    digest = config_digest(config)
    rows: dict[tuple[int, float], dict] = {}
    for rec in read_runs(runs_path):
        if rec.get("status") != "ok":
            continue
        if rec.get("config_digest") != digest and not force:
            raise DataError(
                f"run line for seed {rec.get('init_seed')} has config digest "
                f"{rec.get('config_digest')}; expected {digest} (use --force to override)"
            )
        key = (rec["init_seed"], rec["epsilon"])
        rows.setdefault(key, rec)
    base = config.train.init_seed
    missing = [
        (base + s, eps)
        for s in range(config.n_seeds)
        for eps in config.epsilons
        if (base + s, eps) not in rows
    ]
    if missing:
        listed = ", ".join(f"(seed={s}, eps={e})" for s, e in missing[:12])
        more = "" if len(missing) <= 12 else f" and {len(missing) - 12} more"
        raise DataError(f"runs file is missing {len(missing)} grid cells: {listed}{more}")
    per_seed: dict[int, list[RunRecord]] = {}
    digests: dict[int, str] = {}
    for s in range(config.n_seeds):
        seed = base + s
        records = []
        seed_digests = set()
        for eps in config.epsilons:
            rec = rows[(seed, eps)]
            seed_digests.add(rec.get("initial_params_digest"))
            records.append(
                RunRecord(
                    init_seed=rec["init_seed"],
                    epsilon=rec["epsilon"],
                    r2_train=rec["r2_train"],
                    r2_val=rec["r2_val"],
                    r2_test=rec["r2_test"],
                    epochs_run=rec["epochs_run"],
                    early_stopped=rec["early_stopped"],
                    wall_time=rec["wall_time"],
                    checkpoint_path=rec.get("checkpoint_path"),
                )
            )
        if len(seed_digests) != 1:
            raise DataError(
                f"seed {seed} has differing initial-parameter digests across noise levels: "
                f"{sorted(d or '?' for d in seed_digests)}"
            )
        per_seed[seed] = records
        digests[seed] = next(iter(seed_digests))
    return per_seed, digests


def _report_to_dict(report: CohortReport, digests: dict) -> dict:
    return {
        "category_fractions": report.category_fractions,
        "optimal_epsilon_histogram": {
            f"{eps:g}": frac for eps, frac in report.optimal_epsilon_histogram.items()
        },
        "pearson_r": report.pearson_r,
        "pearson_p": report.pearson_p,
        "welch_t": report.welch_t,
        "welch_p": report.welch_p,
        "permutation_p": report.permutation_p,
        "dose_response": {
            category.value: {f"{eps:g}": v for eps, v in curve.items()}
            for category, curve in report.dose_response.items()
        },
        "threshold_value": report.threshold_value,
        "p_benefit_below": report.p_benefit_below,
        "p_degrade_above": report.p_degrade_above,
        "mean_delta_r2": report.mean_delta_r2,
        "spread_points": report.spread_points,
        "any_degradation_fraction": report.any_degradation_fraction,
        "seeds": [
            {
                "init_seed": s.init_seed,
                "baseline_r2": s.baseline_r2,
                "best_epsilon": s.best_epsilon,
                "best_noisy_r2": s.best_noisy_r2,
                "delta_r2_percent": s.delta_r2_percent,
                "category": s.category.value,
                "initial_params_digest": digests[s.init_seed],
            }
            for s in report.summaries
        ],
    }


def analyze(runs_path, config: ExperimentConfig, out_dir, force: bool = False) -> dict:
    """Build report.json plus the plot-ready CSV tables; returns the report dict."""
    per_seed, digests = collect_records(runs_path, config, force=force)
    report = build_cohort_report(
        per_seed,
        threshold=config.threshold,
        n_perm=config.permutation_draws,
        perm_seed=config.split_seed,
    )
    payload = {
        "schema": "qgnoise-report/1",
        "code_version": __version__,
        "config_digest": config_digest(config),
        "n_seeds": config.n_seeds,
        "epsilons": list(config.epsilons),
    }
    payload.update(_report_to_dict(report, digests))

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")

    per_seed_r2 = {
        seed: {r.epsilon: r.r2_test for r in records} for seed, records in per_seed.items()
    }
    _write_csv(
        os.path.join(out_dir, "waterfall.csv"),
        ["init_seed", "baseline_r2", "best_epsilon", "best_noisy_r2",
         "delta_r2_percent", "category", "initial_params_digest"],
        [
            [s.init_seed, s.baseline_r2, s.best_epsilon, s.best_noisy_r2,
             s.delta_r2_percent, s.category.value, digests[s.init_seed]]
            for s in sorted(report.summaries, key=lambda s: -s.delta_r2_percent)
        ],
    )
    n = len(report.summaries)
    _write_csv(
        os.path.join(out_dir, "optimal_epsilon_histogram.csv"),
        ["epsilon", "fraction", "count"],
        [
            [f"{eps:g}", frac, round(frac * n)]
            for eps, frac in report.optimal_epsilon_histogram.items()
        ],
    )
    _write_csv(
        os.path.join(out_dir, "dose_response.csv"),
        ["category", "epsilon", "mean_delta_r2_percent", "n_members"],
        [
            [cat.value, f"{eps:g}", mean,
             sum(s.category is cat for s in report.summaries)]
            for cat, curve in report.dose_response.items()
            for eps, mean in curve.items()
        ],
    )
    _write_csv(
        os.path.join(out_dir, "scatter_baseline_vs_delta.csv"),
        ["init_seed", "baseline_r2", "delta_r2_percent", "category"],
        [
            [s.init_seed, s.baseline_r2, s.delta_r2_percent, s.category.value]
            for s in report.summaries
        ],
    )
    return payload


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# --- theory table --------------------------------------------------------------

def theory_table(config: ExperimentConfig) -> dict:
    """Per-molecule optimal error rates next to the configured noise grid."""
    graphs = resolve_dataset(config)
    depth = config.train.n_layers
    rows = []
    for idx, g in enumerate(graphs):
        if config.gate_count is not None:
            n_g, d = config.gate_count, depth
        else:
            n_g, d = gate_count(g, depth), 1
        rows.append(
            {
                "index": idx,
                "n_atoms": g.n_atoms,
                "n_bonds": g.n_bonds,
                "gate_count": n_g * d,
                "epsilon_opt": theoretical_optimal_epsilon(n_g, d),
            }
        )
    summary = {
        "n_molecules": len(rows),
        "epsilon_grid": list(config.epsilons),
        "epsilon_opt_min": min((r["epsilon_opt"] for r in rows), default=None),
        "epsilon_opt_max": max((r["epsilon_opt"] for r in rows), default=None),
        "gate_count_min": min((r["gate_count"] for r in rows), default=None),
        "gate_count_max": max((r["gate_count"] for r in rows), default=None),
    }
    return {"rows": rows, "summary": summary}
