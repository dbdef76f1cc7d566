"""Command-line front end.

Subcommands: gen-data, train, attack, grid, plot. Settings come from three
layers, later ones winning: built-in defaults, a `key = value` config file
(--config), then command-line flags. Keys use dotted prefixes matching the
config dataclasses (data.noise_sigma, run.lr, poison.alpha, grid.alphas).
The POISONBENCH_SEED environment variable, when set, overrides every seed.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .data import (
    GenConfig,
    generate_dataset,
    generate_trigger_patch,
    load_patch,
    save_dataset,
    save_patch,
)
from .errors import ConfigurationError, PoisonbenchError, UsageError
from .harness import (
    GridConfig,
    RunConfig,
    RunReport,
    default_trigger_patch,
    emit_plot_data,
    load_report_json,
    load_runs_csv,
    resolve_dataset,
    run_base,
    run_grid,
    run_poisoned,
    save_report_json,
    write_reports,
)
from .nn import ArchSpec
from .poison import PoisonPlan

SEED_ENV_VAR = "POISONBENCH_SEED"

_DEFAULTS = {
    "data.seed": "0",
    "data.class_count": "8",
    "data.per_class_train": "200",
    "data.per_class_test": "100",
    "data.width": "16",
    "data.height": "16",
    "data.noise_sigma": "0.1",
    "data.shift_range": "2",
    "data.patch_side": "4",
    "run.dataset": "",
    "run.epochs": "10",
    "run.lr": "0.01",
    "run.batch_size": "32",
    "run.model_seed": "0",
    "run.data_seed": "0",
    "arch.conv_blocks": "8x3",
    "arch.hidden_units": "64",
    "poison.alpha": "0.1",
    "poison.beta": "1",
    "poison.strategy": "local",
    "poison.patch": "",
    "attack.base_report": "",
    "grid.alphas": "0.05,0.1,0.15,0.2",
    "grid.betas": "",
    "grid.strategies": "local,global",
    "grid.seeds": "1,2,3,4,5",
    "grid.jobs": "1",
    "plot.runs": "",
}

_SEED_KEYS = ("data.seed", "run.model_seed", "run.data_seed")


@dataclass(frozen=True)
class CliInvocation:
    subcommand: str
    out_dir: Path
    config_path: Path | None
    overrides: tuple[tuple[str, str], ...]


class Settings:
    """Merged key/value view with memory of which keys were set explicitly."""

    def __init__(self, values: dict[str, str], explicit: set[str]):
        self.values = values
        self.explicit = explicit

    def get(self, key: str) -> str:
        return self.values[key]

    def is_explicit(self, key: str) -> bool:
        return key in self.explicit

    def get_int(self, key: str) -> int:
        try:
            return int(self.get(key))
        except ValueError:
            raise ConfigurationError(f"{key} must be an integer, got {self.get(key)!r}") from None

    def get_float(self, key: str) -> float:
        try:
            return float(self.get(key))
        except ValueError:
            raise ConfigurationError(f"{key} must be a number, got {self.get(key)!r}") from None

    def get_floats(self, key: str) -> tuple[float, ...]:
        raw = self.get(key)
        try:
            return tuple(float(part) for part in raw.split(",") if part.strip())
        except ValueError:
            raise ConfigurationError(f"{key} must be comma-separated numbers, got {raw!r}") from None

    def get_ints(self, key: str) -> tuple[int, ...]:
        raw = self.get(key)
        try:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        except ValueError:
            raise ConfigurationError(f"{key} must be comma-separated integers, got {raw!r}") from None

    def get_strs(self, key: str) -> tuple[str, ...]:
        return tuple(part.strip() for part in self.get(key).split(",") if part.strip())


def load_config_file(path: Path) -> list[tuple[str, str]]:
    """Parse `key = value` lines; # starts a comment, blank lines are skipped."""
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from None
    pairs: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected `key = value`, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def merge_settings(invocation: CliInvocation) -> Settings:
    values = dict(_DEFAULTS)
    explicit: set[str] = set()
    layers: list[list[tuple[str, str]]] = []
    if invocation.config_path is not None:
        layers.append(load_config_file(invocation.config_path))
    layers.append(list(invocation.overrides))
    for layer in layers:
        for key, value in layer:
            if key not in values:
                raise ConfigurationError(f"unknown setting {key!r}")
            values[key] = value
            explicit.add(key)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from None
        for key in _SEED_KEYS:
            values[key] = str(seed)
            explicit.add(key)
        values["grid.seeds"] = str(seed)
        explicit.add("grid.seeds")
    return Settings(values, explicit)


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="config file of key = value lines")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--classes", dest="data.class_count", metavar="N")
    parser.add_argument("--per-class-train", dest="data.per_class_train", metavar="N")
    parser.add_argument("--per-class-test", dest="data.per_class_test", metavar="N")
    parser.add_argument("--width", dest="data.width", metavar="N")
    parser.add_argument("--height", dest="data.height", metavar="N")
    parser.add_argument("--noise-sigma", dest="data.noise_sigma", metavar="F")
    parser.add_argument("--shift-range", dest="data.shift_range", metavar="N")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", dest="run.dataset", metavar="DIR",
                        help="directory with train.psb/test.psb; omit to generate synthetic data")
    parser.add_argument("--epochs", dest="run.epochs", metavar="N")
    parser.add_argument("--lr", dest="run.lr", metavar="F")
    parser.add_argument("--batch-size", dest="run.batch_size", metavar="N")
    parser.add_argument("--seed", dest="run.model_seed", metavar="N")
    parser.add_argument("--data-seed", dest="run.data_seed", metavar="N")
    parser.add_argument("--conv-blocks", dest="arch.conv_blocks", metavar="SPEC",
                        help="comma-separated FILTERSxKERNEL blocks, e.g. 8x3,16x3")
    parser.add_argument("--hidden-units", dest="arch.hidden_units", metavar="N")
    _add_data_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poisonbench",
        description="Incremental training-time data poisoning benchmark.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-data", help="write synthetic train/test datasets and a trigger patch")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flag(p)
    p.add_argument("--seed", dest="data.seed", metavar="N")
    p.add_argument("--patch-side", dest="data.patch_side", metavar="N")
    _add_data_flags(p)

    p = sub.add_parser("train", help="train a base model and write its report")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flag(p)
    _add_run_flags(p)

    p = sub.add_parser("attack", help="train with poisoning rounds against a base report")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flag(p)
    p.add_argument("--base-report", dest="attack.base_report", metavar="FILE")
    p.add_argument("--alpha", dest="poison.alpha", metavar="F")
    p.add_argument("--beta", dest="poison.beta", metavar="N")
    p.add_argument("--strategy", dest="poison.strategy", metavar="NAME", help="local or global")
    p.add_argument("--patch-file", dest="poison.patch", metavar="FILE")
    _add_run_flags(p)

    p = sub.add_parser("grid", help="run the full alpha/beta/strategy grid over seeds")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flag(p)
    p.add_argument("--alphas", dest="grid.alphas", metavar="LIST")
    p.add_argument("--alpha", dest="grid.alphas", metavar="F", help="single-point shorthand for --alphas")
    p.add_argument("--betas", dest="grid.betas", metavar="LIST")
    p.add_argument("--beta", dest="grid.betas", metavar="N", help="single-point shorthand for --betas")
    p.add_argument("--strategies", dest="grid.strategies", metavar="LIST")
    p.add_argument("--seeds", dest="grid.seeds", metavar="LIST")
    p.add_argument("--jobs", dest="grid.jobs", metavar="N")
    _add_run_flags(p)

    p = sub.add_parser("plot", help="write per-metric curve data from a runs.csv")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flag(p)
    p.add_argument("--runs", dest="plot.runs", metavar="FILE", help="defaults to OUT/runs.csv")

    return parser


def parse_args(argv) -> CliInvocation:
    namespace = build_parser().parse_args(argv)
    pairs = []
    for key, value in sorted(vars(namespace).items()):
        if key in _DEFAULTS and value is not None:
            pairs.append((key, str(value)))
    return CliInvocation(
        subcommand=namespace.subcommand,
        out_dir=Path(namespace.out) if getattr(namespace, "out", None) else Path("."),
        config_path=Path(namespace.config) if getattr(namespace, "config", None) else None,
        overrides=tuple(pairs),
    )


def _gen_config(settings: Settings) -> GenConfig:
    return GenConfig(
        seed=settings.get_int("data.seed"),
        class_count=settings.get_int("data.class_count"),
        per_class_train=settings.get_int("data.per_class_train"),
        per_class_test=settings.get_int("data.per_class_test"),
        width=settings.get_int("data.width"),
        height=settings.get_int("data.height"),
        noise_sigma=settings.get_float("data.noise_sigma"),
        shift_range=settings.get_int("data.shift_range"),
    )


def _parse_conv_blocks(raw: str) -> tuple[tuple[int, int], ...]:
    blocks = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        pieces = part.split("x")
        if len(pieces) != 2:
            raise ConfigurationError(f"conv block {part!r} must look like FILTERSxKERNEL, e.g. 8x3")
        try:
            blocks.append((int(pieces[0]), int(pieces[1])))
        except ValueError:
            raise ConfigurationError(f"conv block {part!r} must use integers") from None
    return tuple(blocks)


def _arch_from_settings(settings: Settings, cfg: RunConfig) -> ArchSpec | None:
    if not (settings.is_explicit("arch.conv_blocks") or settings.is_explicit("arch.hidden_units")):
        return None
    train, _ = resolve_dataset(cfg)
    return ArchSpec(
        input_width=train.width,
        input_height=train.height,
        conv_blocks=_parse_conv_blocks(settings.get("arch.conv_blocks")),
        hidden_units=settings.get_int("arch.hidden_units"),
        class_count=train.class_count,
    )


def _run_config(settings: Settings) -> RunConfig:
    dataset_path = settings.get("run.dataset")
    dataset = Path(dataset_path) if dataset_path else _gen_config(settings)
    cfg = RunConfig(
        dataset=dataset,
        arch=None,
        epochs=settings.get_int("run.epochs"),
        lr=settings.get_float("run.lr"),
        batch_size=settings.get_int("run.batch_size"),
        model_seed=settings.get_int("run.model_seed"),
        data_seed=settings.get_int("run.data_seed"),
    )
    arch = _arch_from_settings(settings, cfg)
    if arch is not None:
        cfg = replace(cfg, arch=arch)
    cfg.validate()
    return cfg


def _print_summary(report: RunReport) -> None:
    print(
        f"{report.run_id} alc={report.alc:.6f} aip={report.aip:.6f} fscore={report.fscore:.6f}",
        flush=True,
    )


def _cmd_gen_data(settings: Settings, out: Path) -> int:
    cfg = _gen_config(settings)
    train, test = generate_dataset(cfg)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(train, out / "train.psb")
    save_dataset(test, out / "test.psb")
    side = settings.get_int("data.patch_side")
    save_patch(generate_trigger_patch(cfg.seed, side), out / "patch.psb")
    print(f"wrote {len(train)} train and {len(test)} test instances and a {side}x{side} patch to {out}")
    return 0


def _cmd_train(settings: Settings, out: Path) -> int:
    cfg = _run_config(settings)
    report = run_base(cfg)
    _print_summary(report)
    write_reports([report], out)
    report_path = out / f"{report.run_id}.json"
    save_report_json(report, report_path)
    print(f"report written to {report_path}")
    return 0


def _cmd_attack(settings: Settings, out: Path) -> int:
    base_path = settings.get("attack.base_report")
    if not base_path:
        raise UsageError("attack requires --base-report (time and fscore deltas need a base run)")
    base = load_report_json(base_path)
    for key, base_value in (
        ("run.model_seed", base.seed),
        ("run.epochs", base.epochs),
        ("run.lr", base.lr),
        ("run.batch_size", base.batch_size),
    ):
        if not settings.is_explicit(key):
            settings.values[key] = str(base_value)
    cfg = _run_config(settings)

    strategy = settings.get("poison.strategy")
    patch_path = settings.get("poison.patch")
    patch = None
    if patch_path:
        patch = load_patch(patch_path)
    elif strategy == "local":
        patch = default_trigger_patch(cfg, resolve_dataset(cfg)[0].width)
    plan = PoisonPlan(
        alpha=settings.get_float("poison.alpha"),
        beta=settings.get_int("poison.beta"),
        strategy=strategy,
        epochs=cfg.epochs,
        seed=cfg.model_seed,
        patch=patch,
    )
    report = run_poisoned(cfg, plan, base)
    _print_summary(report)
    write_reports([report], out)
    report_path = out / f"{report.run_id}.json"
    save_report_json(report, report_path)
    print(f"report written to {report_path}")
    return 0


def _cmd_grid(settings: Settings, out: Path) -> int:
    betas = settings.get_ints("grid.betas") if settings.get("grid.betas") else None
    grid = GridConfig(
        base=_run_config(settings),
        alphas=settings.get_floats("grid.alphas"),
        betas=betas,
        strategies=settings.get_strs("grid.strategies"),
        seeds=settings.get_ints("grid.seeds"),
    )
    reports = run_grid(grid, jobs=settings.get_int("grid.jobs"), progress=_print_summary)
    paths = write_reports(reports, out)
    paths += emit_plot_data(reports, out)
    print(f"wrote {', '.join(p.name for p in paths)} to {out}")
    return 0


def _cmd_plot(settings: Settings, out: Path) -> int:
    runs_value = settings.get("plot.runs")
    runs_path = Path(runs_value) if runs_value else out / "runs.csv"
    reports = load_runs_csv(runs_path)
    paths = emit_plot_data(reports, out)
    print(f"wrote {', '.join(p.name for p in paths)} to {out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "attack": _cmd_attack,
    "grid": _cmd_grid,
    "plot": _cmd_plot,
}


def main(invocation: CliInvocation) -> int:
    try:
        settings = merge_settings(invocation)
        return _COMMANDS[invocation.subcommand](settings, invocation.out_dir)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PoisonbenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run_main(argv=None) -> int:
    try:
        invocation = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:  # argparse already printed usage text
        code = exc.code
        return code if isinstance(code, int) else (0 if code is None else 2)
    return main(invocation)
