"""Orchestration: base runs, poisoned runs, the experiment grid, and reports.

A run owns its dataset copy, trains for a fixed number of epochs, and in
poisoned runs executes poisoning rounds between epochs per the plan schedule.
Timing covers exactly the epoch/round loop, so the training-time-difference
measure isolates the overhead the attack itself adds. Reports serialize to
runs.csv / losses.csv / rounds.csv plus per-metric plot-data files.
"""

from __future__ import annotations

import csv
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from time import perf_counter

import numpy as np

from .data import Dataset, GenConfig, generate_dataset, generate_trigger_patch, load_dataset
from .errors import ConfigurationError, FormatError, PoisonbenchError, UsageError
from .metrics import alc, aip, confusion_matrix, macro_fscore
from .nn import ArchSpec, init_model, train_epoch
from .poison import (
    GLOBAL_REPLACEMENT,
    LOCAL_PATCH,
    PoisonPlan,
    RoundSummary,
    execute_round,
    plan_rounds,
)

BASE = "base"

RUNS_CSV_COLUMNS = (
    "run_id", "strategy", "alpha", "beta", "seed", "epochs", "lr", "batch_size",
    "alc", "aip", "fscore", "ttd", "pdm", "training_seconds",
)


@dataclass(frozen=True)
class RunConfig:
    """One training run: dataset source, architecture, and loop parameters.

    dataset is either a GenConfig (synthetic data regenerated per run from
    data_seed) or a path to a directory holding train.psb and test.psb.
    arch None means "derive the default architecture from the dataset".
    """

    dataset: GenConfig | str | Path = GenConfig()
    arch: ArchSpec | None = None
    epochs: int = 10
    lr: float = 0.01
    batch_size: int = 32
    model_seed: int = 0
    data_seed: int = 0

    def validate(self) -> None:
        if self.epochs < 2:
            raise ConfigurationError(
                f"epochs must be >= 2 so the loss-change average is defined, got {self.epochs}"
            )
        if not self.lr > 0.0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.model_seed < 0 or self.data_seed < 0:
            raise ConfigurationError("seeds must be nonnegative")
        if isinstance(self.dataset, GenConfig):
            self.dataset.validate()


@dataclass(eq=False)
class RunReport:
    """Everything measured about one run."""

    run_id: str
    strategy: str  # "base", "local", or "global"
    alpha: float
    beta: int
    seed: int
    epochs: int
    lr: float
    batch_size: int
    epoch_losses: tuple[float, ...]
    training_seconds: float
    round_summaries: tuple[RoundSummary, ...]
    alc: float
    aip: float
    fscore: float
    ttd: float
    pdm: float
    confusion: np.ndarray


@dataclass(frozen=True)
class GridConfig:
    """Cross product of attack settings, run once per seed on top of a base run."""

    base: RunConfig = RunConfig()
    alphas: tuple[float, ...] = (0.05, 0.10, 0.15, 0.20)
    betas: tuple[int, ...] | None = None  # None means (1, epochs)
    strategies: tuple[str, ...] = (LOCAL_PATCH, GLOBAL_REPLACEMENT)
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)

    def resolved_betas(self) -> tuple[int, ...]:
        return self.betas if self.betas is not None else (1, self.base.epochs)

    def validate(self) -> None:
        self.base.validate()
        if not self.alphas or not self.resolved_betas() or not self.strategies or not self.seeds:
            raise ConfigurationError("grid alphas, betas, strategies and seeds must be nonempty")
        for a in self.alphas:
            if not 0.0 < a <= 1.0:
                raise ConfigurationError(f"grid alpha {a} outside (0, 1]")
        for b in self.resolved_betas():
            if not 1 <= b <= self.base.epochs:
                raise ConfigurationError(f"grid beta {b} outside [1, {self.base.epochs}]")
        for s in self.strategies:
            if s not in (LOCAL_PATCH, GLOBAL_REPLACEMENT):
                raise ConfigurationError(f"unknown grid strategy {s!r}")
        for seed in self.seeds:
            if seed < 0:
                raise ConfigurationError("grid seeds must be nonnegative")


def build_run_id(strategy: str, alpha: float, beta: int, seed: int) -> str:
    """E.g. local-a0500-b01-s0007: alpha in basis points, zero-padded fields."""
    return f"{strategy}-a{round(alpha * 10000):04d}-b{beta:02d}-s{seed:04d}"


def resolve_dataset(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Fresh (train, test) pair owned by the caller."""
    if isinstance(cfg.dataset, GenConfig):
        return generate_dataset(replace(cfg.dataset, seed=cfg.data_seed))
    root = Path(cfg.dataset)
    if not root.is_dir():
        raise UsageError(f"dataset path {root} must be a directory holding train.psb and test.psb")
    return load_dataset(root / "train.psb"), load_dataset(root / "test.psb")


def _arch_for(cfg: RunConfig, train: Dataset) -> ArchSpec:
    if cfg.arch is None:
        return ArchSpec(input_width=train.width, input_height=train.height, class_count=train.class_count)
    arch = cfg.arch
    if (arch.input_width, arch.input_height) != (train.width, train.height):
        raise ConfigurationError(
            f"arch input {arch.input_width}x{arch.input_height} does not match dataset "
            f"{train.width}x{train.height}"
        )
    if arch.class_count != train.class_count:
        raise ConfigurationError(
            f"arch class_count {arch.class_count} does not match dataset {train.class_count}"
        )
    return arch


def default_trigger_patch(cfg: RunConfig, width: int) -> np.ndarray:
    """Trigger used for local runs unless the caller supplies a patch file."""
    return generate_trigger_patch(seed=cfg.data_seed, side=max(2, round(width / 4)))


def _train_loop(cfg: RunConfig, train: Dataset, plan: PoisonPlan | None):
    """Epoch loop with optional poisoning rounds interleaved; timed as a whole."""
    model = init_model(_arch_for(cfg, train), cfg.model_seed)
    rounds = plan_rounds(cfg.epochs, plan.beta) if plan is not None else []
    losses: list[float] = []
    summaries: list[RoundSummary] = []
    t0 = perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        model, record = train_epoch(model, train, cfg.lr, cfg.batch_size, epoch_seed=epoch)
        losses.append(record.mean_loss)
        if plan is not None and epoch in rounds:
            summaries.append(execute_round(train, plan, rounds.index(epoch) + 1))
    seconds = perf_counter() - t0
    return model, tuple(losses), seconds, tuple(summaries)


def _evaluate(model, test: Dataset) -> tuple[np.ndarray, float, float]:
    cm = confusion_matrix(model, test)
    return cm, macro_fscore(cm), aip(model, test)


def run_base(cfg: RunConfig) -> RunReport:
    """Train without any poisoning; the reference point for ttd and pdm."""
    cfg.validate()
    train, test = resolve_dataset(cfg)
    model, losses, seconds, _ = _train_loop(cfg, train, plan=None)
    cm, fscore, aip_value = _evaluate(model, test)
    return RunReport(
        run_id=build_run_id(BASE, 0.0, 0, cfg.model_seed),
        strategy=BASE,
        alpha=0.0,
        beta=0,
        seed=cfg.model_seed,
        epochs=cfg.epochs,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        epoch_losses=losses,
        training_seconds=seconds,
        round_summaries=(),
        alc=alc(losses),
        aip=aip_value,
        fscore=fscore,
        ttd=0.0,
        pdm=0.0,
        confusion=cm,
    )


def run_poisoned(cfg: RunConfig, plan: PoisonPlan, base: RunReport) -> RunReport:
    """Train with poisoning rounds interleaved per plan; reports ttd and pdm
    against the supplied base run."""
    cfg.validate()
    plan.validate()
    if plan.epochs != cfg.epochs:
        raise ConfigurationError(f"plan epochs {plan.epochs} does not match run epochs {cfg.epochs}")
    if base.strategy != BASE:
        raise UsageError(f"base report must come from a base run, got strategy {base.strategy!r}")
    if base.seed != cfg.model_seed or base.epochs != cfg.epochs:
        raise ConfigurationError(
            f"base report (seed {base.seed}, epochs {base.epochs}) does not match "
            f"run config (seed {cfg.model_seed}, epochs {cfg.epochs})"
        )
    train, test = resolve_dataset(cfg)
    model, losses, seconds, summaries = _train_loop(cfg, train, plan)
    cm, fscore, aip_value = _evaluate(model, test)
    return RunReport(
        run_id=build_run_id(plan.strategy, plan.alpha, plan.beta, cfg.model_seed),
        strategy=plan.strategy,
        alpha=plan.alpha,
        beta=plan.beta,
        seed=cfg.model_seed,
        epochs=cfg.epochs,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        epoch_losses=losses,
        training_seconds=seconds,
        round_summaries=summaries,
        alc=alc(losses),
        aip=aip_value,
        fscore=fscore,
        ttd=seconds - base.training_seconds,
        pdm=base.fscore - fscore,
        confusion=cm,
    )


def _grid_cells(grid: GridConfig):
    for strategy in grid.strategies:
        for a in grid.alphas:
            for b in grid.resolved_betas():
                yield strategy, a, b


def _run_one_seed(grid: GridConfig, seed: int, progress=None) -> list[RunReport]:
    cfg = replace(grid.base, model_seed=seed)
    current = build_run_id(BASE, 0.0, 0, seed)
    try:
        width = cfg.dataset.width if isinstance(cfg.dataset, GenConfig) else resolve_dataset(cfg)[0].width
        patch = default_trigger_patch(cfg, width)
        base_report = run_base(cfg)
        if progress is not None:
            progress(base_report)
        reports = [base_report]
        for strategy, a, b in _grid_cells(grid):
            current = build_run_id(strategy, a, b, seed)
            plan = PoisonPlan(
                alpha=a,
                beta=b,
                strategy=strategy,
                epochs=cfg.epochs,
                seed=seed,
                patch=patch if strategy == LOCAL_PATCH else None,
            )
            report = run_poisoned(cfg, plan, base_report)
            if progress is not None:
                progress(report)
            reports.append(report)
        return reports
    except PoisonbenchError as exc:
        raise type(exc)(f"grid aborted at run {current}: {exc}") from exc


def run_grid(grid: GridConfig, jobs: int = 1, progress=None) -> list[RunReport]:
    """One base report per seed plus one poisoned report per grid cell and seed,
    sorted by (strategy, alpha, beta, seed). jobs > 1 runs seeds in parallel."""
    grid.validate()
    reports: list[RunReport] = []
    if jobs > 1 and len(grid.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(grid.seeds))) as pool:
            futures = [pool.submit(_run_one_seed, grid, seed) for seed in grid.seeds]
            for fut in futures:
                seed_reports = fut.result()
                if progress is not None:
                    for report in seed_reports:
                        progress(report)
                reports.extend(seed_reports)
    else:
        for seed in grid.seeds:
            reports.extend(_run_one_seed(grid, seed, progress))
    reports.sort(key=lambda r: (r.strategy, r.alpha, r.beta, r.seed))
    return reports


def _num(value) -> str:
    """Render ints exactly and floats with 9 significant digits."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".9g")


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise PoisonbenchError(f"cannot write {path}: {exc}") from exc


def write_reports(reports, out_dir) -> list[Path]:
    """Write runs.csv, losses.csv and rounds.csv; rewrites are byte-identical."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = [",".join(RUNS_CSV_COLUMNS)]
    for r in reports:
        lines.append(",".join([
            r.run_id, r.strategy, _num(r.alpha), _num(r.beta), _num(r.seed), _num(r.epochs),
            _num(r.lr), _num(r.batch_size), _num(r.alc), _num(r.aip), _num(r.fscore),
            _num(r.ttd), _num(r.pdm), _num(r.training_seconds),
        ]))
    runs_path = out / "runs.csv"
    _write_text(runs_path, "\n".join(lines) + "\n")

    lines = ["run_id,epoch_index,mean_loss"]
    for r in reports:
        for i, loss in enumerate(r.epoch_losses, start=1):
            lines.append(f"{r.run_id},{i},{_num(loss)}")
    losses_path = out / "losses.csv"
    _write_text(losses_path, "\n".join(lines) + "\n")

    lines = ["run_id,round_index,epoch_after,victim_count,newly_poisoned_count,cumulative_poisoned_count,victim_indices"]
    for r in reports:
        for s in r.round_summaries:
            victims = ";".join(str(v) for v in s.victim_indices)
            lines.append(
                f"{r.run_id},{s.round_index},{s.epoch_after},{len(s.victim_indices)},"
                f"{s.newly_poisoned_count},{s.cumulative_poisoned_count},{victims}"
            )
    rounds_path = out / "rounds.csv"
    _write_text(rounds_path, "\n".join(lines) + "\n")
    return [runs_path, losses_path, rounds_path]


def emit_plot_data(reports, out_dir) -> list[Path]:
    """Per-metric curve files (strategy, beta, alpha, median over seeds), with
    the base run supplying every curve's alpha=0 origin point."""
    bases = [r for r in reports if r.strategy == BASE]
    if not bases:
        raise UsageError("plot data needs at least one base run among the reports")
    poisoned = [r for r in reports if r.strategy != BASE]
    strategies = sorted({r.strategy for r in poisoned})
    betas = sorted({r.beta for r in poisoned})
    alphas = sorted({r.alpha for r in poisoned})

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in ("alc", "aip", "pdm"):
        base_value = 0.0 if metric == "pdm" else statistics.median(getattr(r, metric) for r in bases)
        lines = ["strategy,beta,alpha,median"]
        for strategy in strategies:
            for beta in betas:
                lines.append(f"{strategy},{beta},0,{_num(base_value)}")
                for a in alphas:
                    cell = [
                        getattr(r, metric)
                        for r in poisoned
                        if (r.strategy, r.beta, r.alpha) == (strategy, beta, a)
                    ]
                    if not cell:
                        raise UsageError(f"no reports for grid cell ({strategy}, beta={beta}, alpha={a})")
                    lines.append(f"{strategy},{beta},{_num(a)},{_num(statistics.median(cell))}")
        path = out / f"plot_{metric}.csv"
        _write_text(path, "\n".join(lines) + "\n")
        written.append(path)
    return written


def load_runs_csv(path) -> list[RunReport]:
    """Rebuild summary-level reports from a runs.csv written by write_reports.

    Only the scalar columns survive the round trip; per-epoch losses, round
    summaries and the confusion matrix come back empty. That is enough for
    plot-data emission and cross-run comparisons.
    """
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise PoisonbenchError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(rows[0]) != RUNS_CSV_COLUMNS:
        raise FormatError(
            f"{path}: expected header {','.join(RUNS_CSV_COLUMNS)}"
        )
    reports = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(RUNS_CSV_COLUMNS):
            raise FormatError(f"{path}:{lineno}: expected {len(RUNS_CSV_COLUMNS)} columns, got {len(row)}")
        rec = dict(zip(RUNS_CSV_COLUMNS, row))
        try:
            reports.append(RunReport(
                run_id=rec["run_id"],
                strategy=rec["strategy"],
                alpha=float(rec["alpha"]),
                beta=int(rec["beta"]),
                seed=int(rec["seed"]),
                epochs=int(rec["epochs"]),
                lr=float(rec["lr"]),
                batch_size=int(rec["batch_size"]),
                epoch_losses=(),
                training_seconds=float(rec["training_seconds"]),
                round_summaries=(),
                alc=float(rec["alc"]),
                aip=float(rec["aip"]),
                fscore=float(rec["fscore"]),
                ttd=float(rec["ttd"]),
                pdm=float(rec["pdm"]),
                confusion=np.zeros((0, 0), dtype=np.int64),
            ))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return reports


def report_to_dict(report: RunReport) -> dict:
    return {
        "run_id": report.run_id,
        "strategy": report.strategy,
        "alpha": report.alpha,
        "beta": report.beta,
        "seed": report.seed,
        "epochs": report.epochs,
        "lr": report.lr,
        "batch_size": report.batch_size,
        "epoch_losses": list(report.epoch_losses),
        "training_seconds": report.training_seconds,
        "round_summaries": [
            {
                "round_index": s.round_index,
                "epoch_after": s.epoch_after,
                "victim_indices": list(s.victim_indices),
                "newly_poisoned_count": s.newly_poisoned_count,
                "cumulative_poisoned_count": s.cumulative_poisoned_count,
            }
            for s in report.round_summaries
        ],
        "alc": report.alc,
        "aip": report.aip,
        "fscore": report.fscore,
        "ttd": report.ttd,
        "pdm": report.pdm,
        "confusion": report.confusion.tolist(),
    }


def report_from_dict(payload: dict) -> RunReport:
    return RunReport(
        run_id=payload["run_id"],
        strategy=payload["strategy"],
        alpha=float(payload["alpha"]),
        beta=int(payload["beta"]),
        seed=int(payload["seed"]),
        epochs=int(payload["epochs"]),
        lr=float(payload["lr"]),
        batch_size=int(payload["batch_size"]),
        epoch_losses=tuple(float(x) for x in payload["epoch_losses"]),
        training_seconds=float(payload["training_seconds"]),
        round_summaries=tuple(
            RoundSummary(
                round_index=int(s["round_index"]),
                epoch_after=int(s["epoch_after"]),
                victim_indices=tuple(int(v) for v in s["victim_indices"]),
                newly_poisoned_count=int(s["newly_poisoned_count"]),
                cumulative_poisoned_count=int(s["cumulative_poisoned_count"]),
            )
            for s in payload["round_summaries"]
        ),
        alc=float(payload["alc"]),
        aip=float(payload["aip"]),
        fscore=float(payload["fscore"]),
        ttd=float(payload["ttd"]),
        pdm=float(payload["pdm"]),
        confusion=np.array(payload["confusion"], dtype=np.int64),
    )


def save_report_json(report: RunReport, path) -> None:
    _write_text(Path(path), json.dumps(report_to_dict(report), indent=2) + "\n")


def load_report_json(path) -> RunReport:
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise PoisonbenchError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PoisonbenchError(f"{path}: invalid report JSON: {exc}") from exc
    return report_from_dict(payload)
