"""Command-line front end: ``binrbm generate | train | check | plot``.

Configuration files are flat ``key = value`` text with ``#`` comments.
Relative paths inside a config resolve against the config file's directory.

Exit codes: 0 success, 1 failed check, 2 usage or I/O error, 3 inconsistent data.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import checks
from .io import (FormatError, atomic_write, read_dataset, read_model, read_vstate, write_dataset,
                 write_model, write_vstate)
from .model import DEFAULT_BURN_IN, DEFAULT_THIN, generate_teacher_student
from .train import TrainerConfig, TrainTrace, train
from .variational import PriorSpec

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

_TRAINER_FIELDS = {f.name: f for f in dataclasses.fields(TrainerConfig)}
_EXTRA_KEYS = {
    "n": int, "m": int, "d": int,
    "data_path": Path, "model_path": Path, "out_dir": Path, "init_path": Path,
    "prior_mean": float, "burn_in": int, "thin": int, "plot": bool,
    "check_tol": float,
}
_PATH_KEYS = {k for k, t in _EXTRA_KEYS.items() if t is Path}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclasses.dataclass
class ExperimentConfig:
    trainer: TrainerConfig
    n: int | None = None
    m: int | None = None
    d: int | None = None
    data_path: Path | None = None
    model_path: Path | None = None
    out_dir: Path = Path(".")
    init_path: Path | None = None
    prior_mean: float = 0.0
    burn_in: int = DEFAULT_BURN_IN
    thin: int = DEFAULT_THIN
    plot: bool = True
    check_tol: float | None = None


def _coerce(key, raw, kind):
    if kind in (int, "int", "int | None"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    if kind in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is Path:
        return Path(raw)
    return raw


def parse_config(text: str, base: Path = Path(".")) -> ExperimentConfig:
    """Parse flat ``key = value`` text; unknown keys raise :class:`UsageError`."""
    trainer_kw, extra_kw = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise UsageError(f"config line {lineno}: expected key = value")
        try:
            if key in _TRAINER_FIELDS:
                trainer_kw[key] = _coerce(key, raw, _TRAINER_FIELDS[key].type)
            elif key in _EXTRA_KEYS:
                val = _coerce(key, raw, _EXTRA_KEYS[key])
                if key in _PATH_KEYS and not val.is_absolute():
                    val = base / val
                extra_kw[key] = val
            else:
                raise UsageError(f"config line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise UsageError(f"config line {lineno}: bad value for {key}: {exc}") from None
    try:
        trainer = TrainerConfig(**trainer_kw)
    except ValueError as exc:
        raise UsageError(f"invalid training settings: {exc}") from None
    extra_kw.setdefault("out_dir", base)
    return ExperimentConfig(trainer=trainer, **extra_kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text, path.parent)


def _require(cfg, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError(f"config is missing required key(s): {', '.join(missing)}")


def _writable_dir(path: Path):
    if not path.is_dir():
        raise UsageError(f"output directory {path} does not exist")
    if not os.access(path, os.W_OK | os.X_OK):
        raise UsageError(f"output directory {path} is not writable")


def cmd_generate(cfg: ExperimentConfig) -> int:
    _require(cfg, "n", "m", "d")
    out = cfg.out_dir
    _writable_dir(out)
    model_path = cfg.model_path or out / "teacher.txt"
    data_path = cfg.data_path or out / "data.txt"
    for p in (model_path, data_path):
        _writable_dir(p.parent)
    t = cfg.trainer
    teacher, data = generate_teacher_student(cfg.n, cfg.m, cfg.d, t.beta, t.seed,
                                             burn_in_sweeps=cfg.burn_in, thin=cfg.thin)
    write_model(model_path, teacher)
    write_dataset(data_path, data)
    print(f"generated teacher M={cfg.m} N={cfg.n} beta={t.beta:g} and D={cfg.d} samples "
          f"(seed {t.seed}) -> {model_path}, {data_path}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig) -> int:
    _require(cfg, "data_path")
    _writable_dir(cfg.out_dir)
    if not cfg.data_path.is_file():
        raise UsageError(f"dataset file {cfg.data_path} not found")
    data = read_dataset(cfg.data_path)
    teacher = None
    if cfg.model_path is not None:
        if not cfg.model_path.is_file():
            raise UsageError(f"teacher model file {cfg.model_path} not found")
        teacher = read_model(cfg.model_path)
    if cfg.n is not None and cfg.n != data.n_visible:
        raise DataError(f"config n={cfg.n} but dataset has N={data.n_visible}")
    m = cfg.m if cfg.m is not None else (teacher.n_hidden if teacher is not None else None)
    if m is None:
        raise UsageError("config needs m (number of hidden units) or a teacher model_path")
    if teacher is not None and teacher.weights.shape != (m, data.n_visible):
        raise DataError(f"teacher is {teacher.weights.shape}, expected {(m, data.n_visible)}")
    init = None
    if cfg.init_path is not None:
        init = read_vstate(cfg.init_path)
        if init.shape != (m, data.n_visible):
            raise DataError(f"initial state is {init.shape}, expected {(m, data.n_visible)}")
    try:
        prior = PriorSpec(np.full((m, data.n_visible), cfg.prior_mean))
    except ValueError as exc:
        raise UsageError(f"prior_mean: {exc}") from None

    t = cfg.trainer
    state, trace = train(t, data, prior, init=init, teacher=teacher)
    stem = cfg.out_dir / t.variant
    write_vstate(f"{stem}_state.txt", state)
    atomic_write(f"{stem}_trace.csv", trace.to_csv())
    if cfg.plot:
        from .plotting import plot_trace
        plot_trace(trace, f"{stem}_trace.png", label=t.variant)
    last = trace[-1]
    print(f"{t.variant}: epochs={t.epochs} final_elbo={last.elbo:.6g} final_overlap={last.overlap:.4f} "
          f"clip_events={int(trace.column('clip_events').sum())} -> {stem}_trace.csv")
    return EXIT_OK


def cmd_check(suite: str, cfg: ExperimentConfig | None, tol: float | None,
              figure: Path | None = None) -> int:
    seed = cfg.trainer.seed if cfg is not None else 0
    if tol is None and cfg is not None:
        tol = cfg.check_tol
    results = checks.run_suite(suite, seed=seed, tol=tol)
    for r in results:
        print(r.line())
    if figure is not None and suite == "mpcheck":
        from .plotting import plot_bethe_errors
        errs = checks.bethe_vs_enumeration(20, seed)
        plot_bethe_errors(errs["free_energy"], errs["magnetization"], figure)
    failed = sum(not r.passed for r in results)
    print(f"{suite}: {len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK


def cmd_plot(traces: list[Path], out: Path) -> int:
    from .plotting import plot_traces
    loaded = {}
    for p in traces:
        try:
            loaded[p.stem] = TrainTrace.from_csv(p.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read trace {p}: {exc.strerror or exc}") from None
        except (ValueError, KeyError) as exc:
            raise DataError(f"malformed trace {p}: {exc}") from None
    plot_traces(loaded, out)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="binrbm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a random teacher and sample a dataset from it")
    g.add_argument("--config", required=True, type=Path)

    t = sub.add_parser("train", help="fit the variational synapse posterior to a dataset")
    t.add_argument("--config", required=True, type=Path)

    c = sub.add_parser("check", help="run a desk-scale oracle verification suite")
    c.add_argument("--suite", required=True, choices=checks.SUITES)
    c.add_argument("--config", type=Path)
    c.add_argument("--tol", type=float, help="override every tolerance in the suite")
    c.add_argument("--figure", type=Path, help="mpcheck only: write an error plot here")

    p = sub.add_parser("plot", help="render one or more trace CSV files to a figure")
    p.add_argument("--trace", required=True, action="append", type=Path)
    p.add_argument("--out", required=True, type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(load_config(args.config))
        if args.command == "train":
            return cmd_train(load_config(args.config))
        if args.command == "check":
            cfg = load_config(args.config) if args.config is not None else None
            return cmd_check(args.suite, cfg, args.tol, args.figure)
        return cmd_plot(args.trace, args.out)
    except UsageError as exc:
        print(f"binrbm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError) as exc:
        print(f"binrbm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"binrbm: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
