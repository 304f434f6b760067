"""Command line entry point and experiment orchestration.

Subcommands::

    esnproj generate <system>          write a signal as CSV
    esnproj optimize <config.yaml>     GA search only
    esnproj run <config.yaml>          search, retrain and ensemble test
    esnproj attractor <system>         invariant table for several trajectory sources
    esnproj invariants <trajectory>    D2 and LLE of a stored trajectory

Failures print one JSON object on stderr and exit with a nonzero code.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, EsnError
from .hyperopt import (
    TABLE1_BOUNDS,
    GaConfig,
    Hyperparameters,
    evaluate_ensemble,
    evaluate_individual,
    run_ga,
)
from .pipeline import DIMREDS, READOUTS, PipelineKind
from .signals import (
    TimeSeriesRecord,
    autocorr_first_zero,
    gen_lorenz,
    gen_mackey_glass,
    gen_moore_spiegel,
    gen_mso,
    gen_narma,
    split_dataset,
    split_pairs,
    write_series_csv,
)
from .tsa import (
    SOURCES,
    SYSTEMS,
    StudySettings,
    measure_invariants,
    read_trajectory_csv,
    reconstruct_and_measure,
    write_trajectory_csv,
)

CONFIG_VERSION = 1
TASKS = ("mg", "narma", "mso", "lorenz", "moore_spiegel")
GA_KEYS = {f.name for f in fields(GaConfig)}
GENE_KEYS = set(Hyperparameters.gene_names())


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    readout: str = "ridge"
    dimred: str = "none"
    n_samples: int = 10_000
    fractions: tuple = (0.5, 0.25, 0.25)
    tau_f: Optional[int] = None
    ga: dict = field(default_factory=dict)
    theta: Optional[dict] = None
    ensemble: int = 16
    output_dir: str = "results"
    rng_seed: int = 0
    mg_subsample: int = 10
    ode_stride: int = 10
    narma_order: int = 20
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}; expected {CONFIG_VERSION}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; valid: {', '.join(TASKS)}")
        if self.readout not in READOUTS:
            raise ConfigError(f"unknown readout {self.readout!r}; valid: {', '.join(READOUTS)}")
        if self.dimred not in DIMREDS:
            raise ConfigError(f"unknown dimred {self.dimred!r}; valid: {', '.join(DIMREDS)}")
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3 or any(f <= 0 for f in fr) or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ConfigError(f"fractions must be three positive numbers summing to 1, got {list(self.fractions)}")
        object.__setattr__(self, "fractions", fr)
        if self.n_samples < 10:
            raise ConfigError("n_samples must be at least 10")
        if self.ensemble < 1:
            raise ConfigError("ensemble must be at least 1")
        if self.tau_f is not None and self.tau_f < 1:
            raise ConfigError("tau_f must be a positive integer")
        unknown = set(self.ga) - GA_KEYS
        if unknown:
            raise ConfigError(f"unknown GA settings: {sorted(unknown)}")
        try:
            self.ga_config()
        except ValueError as exc:
            raise ConfigError(f"invalid GA settings: {exc}") from None
        if self.theta is not None:
            unknown = set(self.theta) - GENE_KEYS
            if unknown:
                raise ConfigError(f"unknown hyperparameters: {sorted(unknown)}")
            if self.dimred == "kpca" and "kpca_gamma" not in self.theta:
                raise ConfigError("a fixed theta for kpca must set kpca_gamma")
            if self.readout == "svr" and "svr_gamma" not in self.theta:
                raise ConfigError("a fixed theta for svr must set svr_gamma")

    @property
    def kind(self) -> PipelineKind:
        return PipelineKind(self.readout, self.dimred)

    def ga_config(self) -> GaConfig:
        return GaConfig.desk(**self.ga)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        if "version" not in data:
            raise ConfigError("config needs a 'version' field")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "task" not in data:
            raise ConfigError("config needs a 'task' field")
        data = dict(data)
        data["ga"] = dict(data.get("ga") or {})
        return cls(**data)


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))


def _child_seeds(root: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(int(root)).generate_state(n)]


def build_task(cfg: ExperimentConfig):
    """Generate the signal, pick the forecast step and split it."""
    data_seed = _child_seeds(cfg.rng_seed, 3)[0]
    n = cfg.n_samples
    if cfg.task == "narma":
        x, y = gen_narma(n, cfg.narma_order, seed=data_seed)
        return split_pairs(x, y, cfg.fractions)
    if cfg.task == "mg":
        series = gen_mackey_glass(n, subsample=cfg.mg_subsample).values
    elif cfg.task == "mso":
        series = gen_mso(n).values
    elif cfg.task == "lorenz":
        series = gen_lorenz(n * cfg.ode_stride).observable[:: cfg.ode_stride]
    else:
        series = gen_moore_spiegel(n * cfg.ode_stride).observable[:: cfg.ode_stride]
    tau_f = cfg.tau_f if cfg.tau_f is not None else autocorr_first_zero(series)
    return split_dataset(series, tau_f, cfg.fractions)


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None, progress=None) -> dict:
    """Search (unless theta is fixed), retrain with the best genome and test
    an ensemble. Writes ``result.json`` and, after a search, ``convergence.csv``."""
    started = time.time()
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, ga_seed, ens_seed = _child_seeds(cfg.rng_seed, 3)
    task = build_task(cfg)
    gcfg = replace(cfg.ga_config(), rng_seed=ga_seed)
    kind = cfg.kind
    record = {
        "config": cfg.to_dict(),
        "tau_f": task.tau_f,
        "pipeline": str(kind),
        "status": "running",
    }
    if cfg.theta is None:
        res = run_ga(TABLE1_BOUNDS, gcfg, task, kind, progress=progress)
        res.write_convergence_csv(out / "convergence.csv")
        best = res.best
    else:
        best = evaluate_individual(Hyperparameters(**cfg.theta), task, kind, gcfg)
    record.update(
        best_theta=best.theta.to_dict(),
        best_fitness=best.fitness,
        validation_nrmse=best.val_nrmse_mean,
    )
    record["status"] = "searched"
    _dump_json({**record, "metadata": _metadata(started)}, out / "result.json")
    errs = evaluate_ensemble(
        best.theta,
        task,
        kind,
        n_networks=cfg.ensemble,
        seed=ens_seed,
        washout=gcfg.washout,
        fixed_dim=gcfg.fixed_dim,
        kpca_max_samples=gcfg.kpca_max_samples,
        svr_max_samples=gcfg.svr_max_samples,
    )
    record.update(
        test_nrmse=errs,
        test_nrmse_mean=float(np.mean(errs)),
        test_nrmse_std=float(np.std(errs)),
        ensemble_size=len(errs),
        status="complete",
    )
    record["metadata"] = _metadata(started)
    _dump_json(record, out / "result.json")
    return record


def _metadata(started: float) -> dict:
    return {
        "wall_clock_s": time.time() - started,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "package_version": __version__,
    }


def run_optimize(cfg: ExperimentConfig, out_dir=None, progress=None) -> dict:
    started = time.time()
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, ga_seed, _ = _child_seeds(cfg.rng_seed, 3)
    task = build_task(cfg)
    res = run_ga(TABLE1_BOUNDS, replace(cfg.ga_config(), rng_seed=ga_seed), task, cfg.kind, progress=progress)
    res.write_convergence_csv(out / "convergence.csv")
    record = {
        "config": cfg.to_dict(),
        "tau_f": task.tau_f,
        "best_theta": res.best.theta.to_dict(),
        "best_fitness": res.best.fitness,
        "validation_nrmse": res.best.val_nrmse_mean,
        "validation_nrmse_std": res.best.val_nrmse_std,
        "metadata": _metadata(started),
    }
    _dump_json(record, out / "best.json")
    return record


def run_attractor_study(
    system: str,
    sources=SOURCES,
    repeats: int = 10,
    out_dir=None,
    settings: StudySettings = StudySettings(),
    root_seed: int = 0,
) -> dict:
    """Invariant table for each source; a failing source is recorded and skipped."""
    if system not in SYSTEMS:
        raise ConfigError(f"unknown system {system!r}; valid: {', '.join(SYSTEMS)}")
    bad = [s for s in sources if s not in SOURCES]
    if bad:
        raise ConfigError(f"unknown sources {bad}; valid: {', '.join(SOURCES)}")
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows, failures = [], {}
    for src in sources:
        trajs: list = []
        try:
            est = reconstruct_and_measure(src, system, repeats, settings, root_seed, trajs)
        except (EsnError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures[src] = f"{type(exc).__name__}: {exc}"
            continue
        rows.append(est.to_dict())
        if out is not None and trajs:
            write_trajectory_csv(trajs[0], out / f"trajectory_{src}.csv")
    table = {"system": system, "repeats": repeats, "rows": rows, "failures": failures}
    if out is not None:
        _dump_json(table, out / "invariants.json")
        with (out / "invariants.csv").open("w") as fh:
            fh.write("source,d2_mean,d2_std,lle_mean,lle_std,n_repeats\n")
            for r in rows:
                fh.write(
                    f"{r['source']},{r['d2_mean']!r},{r['d2_std']!r},{r['lle_mean']!r},{r['lle_std']!r},{r['n_repeats']}\n"
                )
    return table


def _generate(args) -> dict:
    n = args.n
    if args.system == "mg":
        rec = gen_mackey_glass(n, subsample=args.subsample)
    elif args.system == "mso":
        rec = gen_mso(n)
    elif args.system == "narma":
        x, y = gen_narma(n, args.order, seed=args.seed)
        rec = TimeSeriesRecord(y, 1.0, "narma", {"order": args.order, "seed": args.seed, "inputs": "see narma_inputs.csv"})
        write_series_csv(TimeSeriesRecord(x, 1.0, "narma_inputs", {"seed": args.seed}), Path(args.out).with_name("narma_inputs.csv"))
    elif args.system == "lorenz":
        rec = gen_lorenz(n)
    else:
        rec = gen_moore_spiegel(n)
    write_series_csv(rec, args.out)
    return {"written": str(args.out), "samples": len(rec), "dt": rec.dt}


def _invariants(args) -> dict:
    traj = read_trajectory_csv(args.trajectory)
    if args.tau_c is not None:
        traj = replace(traj, tau_c=args.tau_c)
    settings = StudySettings(lle_horizon=args.horizon)
    d2, lle = measure_invariants(traj, settings)
    rec = {"trajectory": str(args.trajectory), "d2": d2, "lle": lle, "tau_c": traj.tau_c, "dt": traj.dt}
    out = Path(args.out) if args.out else Path(args.trajectory).with_name("invariants.json")
    _dump_json(rec, out)
    return rec


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esnproj", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a benchmark or ODE signal as CSV")
    g.add_argument("system", choices=("mg", "narma", "mso", "lorenz", "moore_spiegel"))
    g.add_argument("-n", type=int, default=10_000)
    g.add_argument("--out", default="series.csv")
    g.add_argument("--subsample", type=int, default=10, help="Mackey-Glass integration steps per sample")
    g.add_argument("--order", type=int, default=20, help="NARMA order")
    g.add_argument("--seed", type=int, default=0)

    for name, text in (("optimize", "GA search only"), ("run", "search, retrain and test an ensemble")):
        c = sub.add_parser(name, help=text)
        c.add_argument("config")
        c.add_argument("--out", help="output directory (overrides output_dir)")
        c.add_argument("--workers", type=int, help="parallel GA evaluations")
        c.add_argument("--full-scale", action="store_true", help="150k samples, GA 50x20, 32 networks")

    a = sub.add_parser("attractor", help="invariants of several reconstructions")
    a.add_argument("system", choices=SYSTEMS)
    a.add_argument("--sources", default=",".join(SOURCES))
    a.add_argument("--repeats", type=int, default=10)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="attractor")

    i = sub.add_parser("invariants", help="D2 and LLE of a trajectory CSV")
    i.add_argument("trajectory")
    i.add_argument("--tau-c", type=int, help="Theiler window in samples (default: stored or ACF first zero)")
    i.add_argument("--horizon", type=float, default=StudySettings.lle_horizon, help="divergence horizon in time units")
    i.add_argument("--out")
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    ga = dict(cfg.ga)
    changes = {}
    if args.full_scale:
        ga.update(population=50, generations=20)
        changes.update(n_samples=150_000, ensemble=32, mg_subsample=1)
    if args.workers:
        ga["workers"] = args.workers
    return replace(cfg, ga=ga, **changes)


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "generate":
            result = _generate(args)
        elif args.command in ("optimize", "run"):
            cfg = _apply_overrides(load_config(args.config), args)
            fn = run_optimize if args.command == "optimize" else run_experiment
            result = fn(cfg, args.out)
            result = {k: result[k] for k in ("best_fitness", "validation_nrmse", "test_nrmse_mean") if k in result}
        elif args.command == "attractor":
            sources = [s.strip() for s in args.sources.split(",") if s.strip()]
            table = run_attractor_study(args.system, sources, args.repeats, args.out, root_seed=args.seed)
            result = {"rows": len(table["rows"]), "failures": table["failures"]}
        else:
            result = _invariants(args)
    except (EsnError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
