"""Command-line entry points and experiment orchestration.

Pipeline per experiment: coefficient-box estimation over the terminal's
parameter grid -> one operator training run -> evaluation of (y_0, z_0)
at every grid point -> per-point baseline -> CSV + manifest.  All output
floats use 17 significant digits so reruns are byte-comparable.
"""

import argparse
import json
import os
import sys
from importlib import metadata

import numpy as np

from .baselines import backward_euler_fixed, mc_delta, mc_price
from .chaos import estimate_coefficients
from .config import (
    ConfigError,
    build_basis,
    build_correlation,
    build_generator,
    build_terminal,
    load_config,
    parameter_grid,
)
from .indices import enumerate_index_set
from .operator import (
    TrainConfig,
    box_from_family,
    estimate_operator_error,
    load_operator,
    operator_y0_z0,
    save_operator,
    train_operator,
)
from .simulation import uniform_grid


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {cause}")


def _fmt(x):
    return f"{float(x):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(x) for x in row) + "\n")


def _setup(cfg):
    basis = build_basis(cfg)
    index_set = enumerate_index_set(cfg["chaos"]["p"], basis.m_d)
    gen = build_generator(cfg)
    grid = uniform_grid(cfg["scheme"]["horizon"], cfg["scheme"]["n_steps"])
    correlation = build_correlation(cfg)
    return basis, index_set, gen, grid, correlation


def _train_config(cfg):
    r = cfg["regressor"]
    return TrainConfig(
        kind=r["kind"],
        batch_size=r["batch_size"],
        adam_steps=r["adam_steps"],
        cold_steps=r["cold_steps"],
        lr=r["lr"],
        hidden_mult=r["hidden_mult"],
        explicit=r["explicit"],
    )


def _manifest(cfg, out_dir, extra=None):
    manifest = {
        "config": cfg,
        "versions": {
            "package": _package_version(),
            "numpy": np.__version__,
            "coefficient_format": 1,
            "model_format": 1,
        },
    }
    manifest.update(extra or {})
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)


def _package_version():
    try:
        return metadata.version("chaosbsde")
    except metadata.PackageNotFoundError:
        return "unknown"


def estimate_box_stage(cfg, out_dir):
    basis, index_set, gen, grid, correlation = _setup(cfg)
    names, points = parameter_grid(cfg)
    terminals = [build_terminal(cfg, dict(zip(names, pt))) for pt in points]
    box = box_from_family(
        terminals, index_set, basis,
        cfg["chaos"]["coefficient_samples"], cfg["seeds"]["box"],
        correlation=correlation,
    )
    rows = [
        list(a) + [lo, hi]
        for a, lo, hi in zip(index_set.indices, box.lo, box.hi)
    ]
    header = [f"a_{k + 1}" for k in range(basis.m_d)] + ["lo", "hi"]
    _write_csv(os.path.join(out_dir, "box.csv"), header, rows)
    return box


def train_stage(cfg, out_dir, box):
    basis, index_set, gen, grid, correlation = _setup(cfg)
    sol = train_operator(
        grid, index_set, basis, gen, box, _train_config(cfg),
        cfg["seeds"]["train"], correlation=correlation,
    )
    save_operator(
        sol, os.path.join(out_dir, "operator"), seeds=cfg["seeds"],
        budgets={k: cfg["regressor"][k] for k in ("batch_size", "adam_steps", "lr")},
    )
    return sol


def evaluate_stage(cfg, out_dir, sol):
    basis, index_set, gen, grid, correlation = _setup(cfg)
    names, points = parameter_grid(cfg)
    d = basis.d
    z_cols = ["operator_Z0"] if d == 1 else [f"operator_Z0_{j + 1}" for j in range(d)]
    header = list(names) + ["operator_Y0"] + z_cols
    rows = []
    for pt in points:
        terminal = build_terminal(cfg, dict(zip(names, pt)))
        est = estimate_coefficients(
            terminal, index_set, basis, cfg["chaos"]["coefficient_samples"],
            cfg["seeds"]["evaluate"], correlation=correlation,
            n_streams=cfg["workers"],
        )
        y0, z0 = operator_y0_z0(sol, est.values)
        rows.append(list(pt) + [y0] + list(z0))
    _write_csv(os.path.join(out_dir, "operator.csv"), header, rows)
    return rows


def baseline_stage(cfg, out_dir):
    basis, index_set, gen, grid, correlation = _setup(cfg)
    names, points = parameter_grid(cfg)
    d = basis.d
    kind = cfg["baseline"]["kind"]
    n_paths = cfg["baseline"]["n_paths"]
    z_cols = (
        ["baseline_Z0", "baseline_Z0_stderr"]
        if d == 1
        else [f"baseline_Z0_{j + 1}" for j in range(d)]
        + [f"baseline_Z0_stderr_{j + 1}" for j in range(d)]
    )
    header = list(names) + ["baseline_Y0", "baseline_Y0_stderr"] + z_cols
    rows = []
    for pt in points:
        terminal = build_terminal(cfg, dict(zip(names, pt)))
        if kind == "mc":
            price = mc_price(
                terminal, basis, n_paths, cfg["seeds"]["baseline"], gen.r,
                correlation=correlation,
            )
            z0, z0_se = mc_delta(
                terminal, basis, n_paths, cfg["seeds"]["baseline"], gen.r,
                correlation=correlation,
            )
            rows.append(list(pt) + [price.value, price.stderr] + list(z0) + list(z0_se))
        else:
            fixed = backward_euler_fixed(
                terminal, grid, index_set, basis, gen, n_paths,
                cfg["seeds"]["baseline"], correlation=correlation,
            )
            rows.append(
                list(pt)
                + [fixed.y0, fixed.y0_stderr]
                + list(fixed.z0)
                + list(fixed.z0_stderr)
            )
    _write_csv(os.path.join(out_dir, "baseline.csv"), header, rows)
    return rows


def run_experiment(cfg, out_dir):
    """Full pipeline; returns the artifact directory."""
    os.makedirs(out_dir, exist_ok=True)
    try:
        box = estimate_box_stage(cfg, out_dir)
    except Exception as exc:
        raise StageError("estimate-box", exc) from exc
    try:
        sol = train_stage(cfg, out_dir, box)
    except Exception as exc:
        raise StageError("train", exc) from exc
    try:
        op_rows = evaluate_stage(cfg, out_dir, sol)
    except Exception as exc:
        raise StageError("evaluate", exc) from exc
    try:
        base_rows = baseline_stage(cfg, out_dir)
    except Exception as exc:
        raise StageError("baseline", exc) from exc

    names, _ = parameter_grid(cfg)
    d = cfg["scheme"]["d"]
    n_par = len(names)
    z_cols = ["operator_Z0"] if d == 1 else [f"operator_Z0_{j + 1}" for j in range(d)]
    bz_cols = (
        ["baseline_Z0", "baseline_Z0_stderr"]
        if d == 1
        else [f"baseline_Z0_{j + 1}" for j in range(d)]
        + [f"baseline_Z0_stderr_{j + 1}" for j in range(d)]
    )
    header = (
        list(names) + ["operator_Y0"] + z_cols
        + ["baseline_Y0", "baseline_Y0_stderr"] + bz_cols
        + ["abs_err", "rel_err"]
    )
    rows = []
    for op, base in zip(op_rows, base_rows):
        y_op = op[n_par]
        y_base = base[n_par]
        abs_err = abs(y_op - y_base)
        rel_err = abs_err / abs(y_base) if y_base != 0.0 else float("nan")
        rows.append(op + base[n_par:] + [abs_err, rel_err])
    _write_csv(os.path.join(out_dir, "results.csv"), header, rows)
    _manifest(cfg, out_dir)
    return out_dir


def run_convergence(cfg, out_dir):
    """Nested-grid error study against a fine-grid per-xi baseline."""
    os.makedirs(out_dir, exist_ok=True)
    basis, index_set, gen, _, correlation = _setup(cfg)
    nested = cfg["scheme"].get("nested_steps") or [5, 10, 20]
    horizon = cfg["scheme"]["horizon"]
    terminal = build_terminal(cfg)
    est = estimate_coefficients(
        terminal, index_set, basis, cfg["chaos"]["coefficient_samples"],
        cfg["seeds"]["evaluate"], correlation=correlation, n_streams=cfg["workers"],
    )
    fine_grid = uniform_grid(horizon, nested[-1])
    try:
        reference = backward_euler_fixed(
            terminal, fine_grid, index_set, basis, gen,
            cfg["baseline"]["n_paths"], cfg["seeds"]["baseline"],
            correlation=correlation,
        )
    except Exception as exc:
        raise StageError("baseline", exc) from exc
    rows = []
    for n in nested:
        grid = uniform_grid(horizon, n)
        try:
            sol = train_operator(
                grid, index_set, basis, gen,
                _degenerate(est), _train_config(cfg),
                cfg["seeds"]["train"], correlation=correlation,
            )
            report = estimate_operator_error(
                sol, terminal, reference, cfg["evaluation"]["n_paths"],
                cfg["seeds"]["evaluate"], coefficients=est,
            )
        except Exception as exc:
            raise StageError("convergence", exc) from exc
        rows.append(
            [grid.mesh, report.y_sq_error, report.y_sq_stderr,
             report.z_sq_error, report.z_sq_stderr]
        )
    meshes = np.array([r[0] for r in rows])
    errs = np.array([max(r[1], 1e-300) for r in rows])
    slope = float(np.polyfit(np.log(meshes), np.log(errs), 1)[0])
    _write_csv(
        os.path.join(out_dir, "convergence.csv"),
        ["mesh", "eps_Y", "eps_Y_stderr", "eps_Z", "eps_Z_stderr"],
        rows,
    )
    _manifest(cfg, out_dir, extra={"loglog_slope": slope})
    return slope


def _degenerate(coefficients):
    from .operator import degenerate_box

    return degenerate_box(coefficients)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="chaosbsde",
        description="Solution-operator approximation for backward SDEs over chaos coefficients",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("estimate-box", "train", "evaluate", "baseline",
                 "experiment", "convergence", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None, help="override all stage seeds")
        p.add_argument("--workers", type=int, default=None, help="stream partition count")
        p.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seeds"] = {k: args.seed + i for i, k in enumerate(["box", "train", "evaluate", "baseline"])}
    if args.workers is not None:
        cfg["workers"] = args.workers
    out_dir = args.out or cfg["output_dir"]

    try:
        if args.command == "validate":
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "estimate-box":
            estimate_box_stage(cfg, out_dir)
        elif args.command == "train":
            box = estimate_box_stage(cfg, out_dir)
            train_stage(cfg, out_dir, box)
        elif args.command == "evaluate":
            gen = build_generator(cfg)
            sol = load_operator(os.path.join(out_dir, "operator"), gen)
            evaluate_stage(cfg, out_dir, sol)
        elif args.command == "baseline":
            baseline_stage(cfg, out_dir)
        elif args.command == "experiment":
            run_experiment(cfg, out_dir)
        elif args.command == "convergence":
            slope = run_convergence(cfg, out_dir)
            print(f"log-log slope: {slope:.4f}")
    except StageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"stage {args.command!r} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
