"""Experiment harness: config files, runs, lambda sweeps, summaries.

Config files are YAML (see README for the schema). All output is plain
CSV with floats printed at 17 significant digits, so traces round-trip
bit-exactly and reruns of the same config produce byte-identical files.

Exit codes: 0 success, 2 config error (with a field diagnostic), 3
numerical failure (with iteration context).
"""

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import problems as problems_mod
from .algorithms import (
    METHODS, AdaptiveStep, ConstantStep, PolynomialStep, _check_method_setup,
    run_iteration,
)
from .diagnostics import (
    NoConvergence, RunTrace, reference_solution, summarize_traces,
    TRACE_COLUMNS,
)
from .geometry import DomainError
from .relaxation import (
    ConstantSchedule, ModeViolation, ScheduleMode, TwoPointSchedule,
    WarmupSchedule, validate_schedule,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


class SchemaMismatch(ValueError):
    """A trace file does not match the expected schema."""


def _fmt(x):
    return f"{x:.17g}"


def _require(mapping, key, path):
    if key not in mapping:
        raise ConfigError(f"{path}.{key}: missing required field")
    return mapping[key]


def _build_problem(cfg):
    kind = _require(cfg, "kind", "problem")
    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    if kind == "logistic":
        return problems_mod.generate_logistic(
            rng,
            n=int(cfg.get("n", 2000)),
            d=int(cfg.get("d", 20)),
            split=float(cfg.get("split", 0.8)),
            weight_decay=float(cfg.get("weight_decay", 1e-2)),
            label_flip=float(cfg.get("label_flip", 0.05)),
        )
    if kind == "bilinear":
        return problems_mod.generate_bilinear(
            rng, d=int(cfg.get("d", 20)), mu=float(cfg.get("mu", 0.1))
        )
    if kind == "sparse":
        return problems_mod.generate_sparse_regression(
            rng,
            n=int(cfg.get("n", 200)),
            d=int(cfg.get("d", 50)),
            k=int(cfg.get("k", 5)),
            noise_sigma=float(cfg.get("noise_sigma", 0.01)),
            l1_weight=float(cfg.get("l1_weight", 0.01)),
        )
    if kind == "simplex":
        return problems_mod.generate_simplex_target(rng, d=int(cfg.get("d", 4)))
    if kind == "feasibility":
        return problems_mod.HalfSpaceFeasibilityProblem(
            dim=int(cfg.get("d", 5)), offset=float(cfg.get("offset", 0.0))
        )
    raise ConfigError(f"problem.kind: unknown kind {kind!r}")


def _build_step_rule(cfg):
    kind = _require(cfg, "kind", "step_rule")
    try:
        if kind == "constant":
            return ConstantStep(float(_require(cfg, "eta", "step_rule")))
        if kind == "polynomial":
            return PolynomialStep(
                float(_require(cfg, "eta0", "step_rule")),
                float(cfg.get("power", 1.0)),
            )
        if kind == "adaptive":
            rho = cfg.get("rho")
            return AdaptiveStep(
                float(_require(cfg, "eta_base", "step_rule")),
                float(cfg.get("epsilon", 1e-8)),
                None if rho is None else float(rho),
            )
    except ValueError as exc:
        raise ConfigError(f"step_rule: {exc}") from exc
    raise ConfigError(f"step_rule.kind: unknown kind {kind!r}")


def _build_schedule(cfg):
    kind = _require(cfg, "kind", "relaxation")
    try:
        if kind == "constant":
            return ConstantSchedule(float(_require(cfg, "lambda", "relaxation")))
        if kind == "two_point":
            return TwoPointSchedule(
                float(_require(cfg, "lambda_lo", "relaxation")),
                float(_require(cfg, "lambda_hi", "relaxation")),
                float(_require(cfg, "p_lo", "relaxation")),
            )
        if kind == "warmup":
            return WarmupSchedule(
                float(_require(cfg, "start", "relaxation")),
                float(_require(cfg, "end", "relaxation")),
                int(_require(cfg, "ramp_steps", "relaxation")),
            )
    except ValueError as exc:
        raise ConfigError(f"relaxation: {exc}") from exc
    raise ConfigError(f"relaxation.kind: unknown kind {kind!r}")


@dataclass(frozen=True)
class RunConfig:
    problem_cfg: dict
    method: str
    geometry: str
    variant: str
    step_rule_cfg: dict
    relaxation_cfg: dict
    mode: ScheduleMode
    n_iters: int
    seeds: tuple
    master_seed: int
    noise_sigma: float
    natgrad_damping: float
    out_dir: str

    def build_problem(self):
        return _build_problem(self.problem_cfg)

    def build_step_rule(self):
        return _build_step_rule(self.step_rule_cfg)

    def build_schedule(self):
        return _build_schedule(self.relaxation_cfg)


def config_from_dict(raw):
    """Validate a parsed YAML tree into a RunConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version}")
    problem_cfg = _require(raw, "problem", "config")
    method = _require(raw, "method", "config")
    if method not in METHODS:
        raise ConfigError(f"method: unknown method {method!r}")
    geometry = raw.get("geometry", "euclidean")
    if geometry not in ("euclidean", "entropy"):
        raise ConfigError(f"geometry: must be euclidean or entropy, got {geometry!r}")
    variant = str(raw.get("variant", "standard" if method == "prox_sgd" else "b"))
    mode_name = str(raw.get("relaxation", {}).get("mode", "bounded"))
    try:
        mode = ScheduleMode(mode_name)
    except ValueError as exc:
        raise ConfigError(f"relaxation.mode: unknown mode {mode_name!r}") from exc
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)) or not seeds:
        raise ConfigError("seeds: must be a nonempty list of seed indices")
    n_iters = int(_require(raw, "n_iters", "config"))
    if n_iters < 0:
        raise ConfigError("n_iters: must be nonnegative")
    cfg = RunConfig(
        problem_cfg=dict(problem_cfg),
        method=method,
        geometry=geometry,
        variant=variant,
        step_rule_cfg=dict(_require(raw, "step_rule", "config")),
        relaxation_cfg=dict(_require(raw, "relaxation", "config")),
        mode=mode,
        n_iters=n_iters,
        seeds=tuple(int(s) for s in seeds),
        master_seed=int(raw.get("master_seed", 0)),
        noise_sigma=float(raw.get("noise_sigma", 0.0)),
        natgrad_damping=float(raw.get("natgrad_damping", 1e-8)),
        out_dir=str(raw.get("out_dir", "runs")),
    )
    _validate_config(cfg)
    return cfg


def _validate_config(cfg):
    schedule = cfg.build_schedule()
    try:
        validate_schedule(schedule, cfg.mode)
    except ModeViolation as exc:
        raise ConfigError(f"relaxation: {exc}") from exc
    if cfg.mode is ScheduleMode.SUPER and cfg.method != "half_space":
        raise ConfigError(
            "relaxation.mode: super relaxations are supported for the "
            "half_space method only; other methods require bounded mode"
        )
    hi = schedule.lambda_bounds()[1]
    relaxed = cfg.method.endswith(("_or", "_or_a", "_or_b")) or cfg.method in (
        "or_smd_a", "or_smd_b",
    )
    if relaxed and hi >= 2.0:
        raise ConfigError(
            "relaxation: over-relaxed methods require all lambda realizations "
            f"strictly below 2 (schedule reaches {hi})"
        )
    # instantiating the run pieces surfaces the remaining pairing errors
    problem = cfg.build_problem()
    try:
        _check_method_setup(problem, cfg.method, cfg.geometry,
                            cfg.build_step_rule(), cfg.variant)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def write_trace(path, trace):
    lines = [",".join(TRACE_COLUMNS)]
    has_ref = trace.bregman_to_ref is not None
    for i in range(len(trace)):
        ref = _fmt(trace.bregman_to_ref[i]) if has_ref else ""
        lines.append(
            ",".join([
                str(int(trace.n[i])),
                _fmt(trace.loss[i]),
                ref,
                _fmt(trace.grad_norm[i]),
                _fmt(trace.lambda_used[i]),
                _fmt(trace.step_norm[i]),
                "1" if trace.domain_clamp_flag[i] else "0",
            ])
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path):
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0].split(",") != list(TRACE_COLUMNS):
        raise SchemaMismatch(f"{path}: unexpected trace header")
    rows = {name: [] for name in TRACE_COLUMNS}
    has_ref = True
    for line in text[1:]:
        parts = line.split(",")
        if len(parts) != len(TRACE_COLUMNS):
            raise SchemaMismatch(f"{path}: malformed row {line!r}")
        rows["n"].append(int(parts[0]))
        rows["loss"].append(float(parts[1]))
        if parts[2] == "":
            has_ref = False
            rows["bregman_to_ref"].append(np.nan)
        else:
            rows["bregman_to_ref"].append(float(parts[2]))
        rows["grad_norm"].append(float(parts[3]))
        rows["lambda_used"].append(float(parts[4]))
        rows["step_norm"].append(float(parts[5]))
        rows["domain_clamp_flag"].append(parts[6] == "1")
    return RunTrace(
        n=np.asarray(rows["n"], dtype=int),
        loss=np.asarray(rows["loss"], dtype=float),
        bregman_to_ref=np.asarray(rows["bregman_to_ref"], dtype=float) if has_ref else None,
        grad_norm=np.asarray(rows["grad_norm"], dtype=float),
        lambda_used=np.asarray(rows["lambda_used"], dtype=float),
        step_norm=np.asarray(rows["step_norm"], dtype=float),
        domain_clamp_flag=np.asarray(rows["domain_clamp_flag"], dtype=bool),
    )


SUMMARY_COLUMNS = ("seed", "early_slope", "steps_to_target", "final_loss",
                   "loss_variance")


def _steps_str(value):
    return "not_reached" if value is None else str(int(value))


def write_summary(path, stats):
    lines = [",".join(SUMMARY_COLUMNS)]
    for i, seed in enumerate(stats.seeds):
        lines.append(",".join([
            str(seed),
            _fmt(stats.early_slope[i]),
            _steps_str(stats.steps_to_target[i]),
            _fmt(stats.final_loss[i]),
            _fmt(stats.loss_variance[i]),
        ]))
    agg = stats.aggregates()
    for label, idx in (("mean", 0), ("std", 1)):
        steps_agg = agg["steps_to_target"][idx]
        lines.append(",".join([
            label,
            _fmt(agg["early_slope"][idx]),
            "not_reached" if steps_agg is None else _fmt(steps_agg),
            _fmt(agg["final_loss"][idx]),
            _fmt(agg["loss_variance"][idx]),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_summary(path):
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0].split(",") != list(SUMMARY_COLUMNS):
        raise SchemaMismatch(f"{path}: unexpected summary header")
    return [line.split(",") for line in text[1:]]


def run_config(cfg, out_dir=None, quiet=False):
    """Run every seed of a config; write one trace per seed plus a summary.

    Returns (traces, stats).
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.build_problem()
    step_rule = cfg.build_step_rule()
    schedule = cfg.build_schedule()
    z_ref = reference_solution(problem)
    np.savetxt(out / "reference.txt", z_ref, fmt="%.17g")
    traces = []
    for seed in cfg.seeds:
        trace, _ = run_iteration(
            problem, cfg.method, step_rule,
            geometry=cfg.geometry, schedule=schedule, mode=cfg.mode,
            master_seed=cfg.master_seed, seed_index=seed,
            n_iters=cfg.n_iters, noise_sigma=cfg.noise_sigma,
            variant=cfg.variant, natgrad_damping=cfg.natgrad_damping,
        )
        traces.append(trace)
        write_trace(out / f"trace_seed{seed}.csv", trace)
        if not quiet:
            print(f"seed {seed}: final loss {trace.final_loss:.6g}")
    stats = summarize_traces(traces, cfg.seeds)
    write_summary(out / "summary.csv", stats)
    return traces, stats


def sweep_config(cfg, grid, out_dir=None, quiet=False):
    """Run the full seed set for each lambda in the grid.

    The baseline lambda = 1.0 must be present: its per-seed final losses
    define the steps-to-target thresholds for every other lambda. Returns
    the comparison table as a list of row dicts (one per lambda).
    """
    if not grid:
        raise ConfigError("grid: must be nonempty")
    if not any(lam == 1.0 for lam in grid):
        raise ConfigError(
            "grid: steps-to-target is measured against the lambda=1.0 "
            "baseline, which is missing from the grid"
        )
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_traces = {}
    for lam in grid:
        sub_cfg = replace(
            cfg, relaxation_cfg={"kind": "constant", "lambda": float(lam)}
        )
        _validate_config(sub_cfg)
        traces, _ = run_config(sub_cfg, out / f"lambda_{lam:g}", quiet=quiet)
        all_traces[lam] = traces
    baseline_targets = [t.final_loss for t in all_traces[1.0]]
    table = []
    for lam in grid:
        stats = summarize_traces(all_traces[lam], cfg.seeds,
                                 target_losses=baseline_targets)
        agg = stats.aggregates()
        table.append({
            "lambda": float(lam),
            "early_slope_mean": agg["early_slope"][0],
            "early_slope_std": agg["early_slope"][1],
            "steps_to_target_mean": agg["steps_to_target"][0],
            "steps_to_target_std": agg["steps_to_target"][1],
            "final_loss_mean": agg["final_loss"][0],
            "final_loss_std": agg["final_loss"][1],
        })
    _write_comparison(out / "comparison.csv", table)
    if not quiet:
        for row in table:
            steps = row["steps_to_target_mean"]
            steps_txt = "not_reached" if steps is None else f"{steps:.1f}"
            print(
                f"lambda {row['lambda']:.2g}: early_slope "
                f"{row['early_slope_mean']:+.4f}±{row['early_slope_std']:.4f}  "
                f"steps_to_target {steps_txt}  "
                f"final_loss {row['final_loss_mean']:.4g}"
            )
    return table


COMPARISON_COLUMNS = (
    "lambda", "early_slope_mean", "early_slope_std", "steps_to_target_mean",
    "steps_to_target_std", "final_loss_mean", "final_loss_std",
)


def _write_comparison(path, table):
    lines = [",".join(COMPARISON_COLUMNS)]
    for row in table:
        cells = [repr(row["lambda"])]  # grid value, shortest round-trip form
        for col in COMPARISON_COLUMNS[1:]:
            value = row[col]
            cells.append("not_reached" if value is None else _fmt(value))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def summarize_dir(trace_dir, out_path=None):
    """Recompute SummaryStats from trace files alone (no hidden state)."""
    trace_dir = Path(trace_dir)
    paths = sorted(trace_dir.glob("trace_seed*.csv"))
    if not paths:
        raise ConfigError(f"{trace_dir}: contains no trace_seed*.csv files")
    seeds = []
    traces = []
    for path in paths:
        seeds.append(int(path.stem.replace("trace_seed", "")))
        traces.append(read_trace(path))
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise SchemaMismatch(
            f"{trace_dir}: traces have mixed lengths {sorted(lengths)}"
        )
    order = np.argsort(seeds)
    seeds = [seeds[i] for i in order]
    traces = [traces[i] for i in order]
    stats = summarize_traces(traces, seeds)
    if out_path is not None:
        write_summary(out_path, stats)
    return stats


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="bregmanopt",
        description="Bregman-geometry optimization experiment harness "
                    f"(v{__version__})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one config over its seed list")
    run_p.add_argument("--config", required=True, help="YAML config path")
    run_p.add_argument("--out", default=None, help="output directory override")
    run_p.add_argument("--seeds", type=int, default=None,
                       help="override: use seed indices 0..N-1")
    run_p.add_argument("--quiet", action="store_true")

    sweep_p = sub.add_parser("sweep", help="sweep a lambda grid over a config")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--seeds", type=int, default=None)
    sweep_p.add_argument("--grid", default="1.0,1.3,1.6,1.8",
                         help="comma-separated lambda grid")
    sweep_p.add_argument("--quiet", action="store_true")

    sum_p = sub.add_parser("summarize", help="recompute a summary from traces")
    sum_p.add_argument("trace_dir")
    sum_p.add_argument("--out", default=None, help="write the summary here")
    sum_p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seeds is not None:
                cfg = replace(cfg, seeds=tuple(range(args.seeds)))
            run_config(cfg, out_dir=args.out, quiet=args.quiet)
        elif args.command == "sweep":
            cfg = load_config(args.config)
            if args.seeds is not None:
                cfg = replace(cfg, seeds=tuple(range(args.seeds)))
            grid = [float(tok) for tok in args.grid.split(",") if tok.strip()]
            sweep_config(cfg, grid, out_dir=args.out, quiet=args.quiet)
        elif args.command == "summarize":
            stats = summarize_dir(args.trace_dir, out_path=args.out)
            if not args.quiet:
                agg = stats.aggregates()
                steps = agg["steps_to_target"][0]
                steps_txt = "not_reached" if steps is None else f"{steps:.1f}"
                print(
                    f"{len(stats.seeds)} seeds: final_loss "
                    f"{agg['final_loss'][0]:.6g}±{agg['final_loss'][1]:.2g}, "
                    f"steps_to_target {steps_txt}"
                )
    except (ConfigError, ModeViolation, SchemaMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OverflowError, DomainError, NoConvergence, FloatingPointError) as exc:
        context = getattr(exc, "iteration", None)
        where = f" at iteration {context}" if context is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
