"""Command line experiment runner.

One invocation runs one experiment from a TOML config and writes a
self-describing artifact set: report.json with the config hash and
library versions, kind-specific CSV files, and a MANIFEST.txt with a
checksum per artifact.  Identical config and seed reproduce identical
artifacts except for the timing block of the report.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys as _sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import (
    KINDS,
    ConfigError,
    ExperimentConfig,
    load_config,
    with_overrides,
)
from .diagnostics import aldous_modulus, galerkin_convergence
from .estimate import FUNCTIONAL_KEYS, mc_moments, resolve_threads, uniformity_check
from .fracop import assemble_integral_operator, assemble_spectral_operator
from .galerkin import make_system, project_initial, simulate_path
from .model import (
    SampleGrid,
    check_abstract,
    check_f,
    check_h,
    check_sigma,
    derive_profile,
)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _assemble(cfg: ExperimentConfig):
    if cfg.space_mode == "IntegralFEM":
        return assemble_integral_operator(cfg.space)
    return assemble_spectral_operator(cfg.space)


def _initial_nodal(profile: str, op) -> np.ndarray:
    nodes = op.space.nodes
    a, b = op.space.a, op.space.b
    if profile == "sine":
        return np.sin(np.pi * (nodes - a) / (b - a))
    if profile == "hat":
        return np.minimum(nodes - a, b - nodes)
    return np.ones_like(nodes)


def _initial_eigen(sys, profile: str, scale: float) -> np.ndarray:
    """Projected profile rescaled so the H norm equals scale exactly."""
    coeffs = project_initial(sys, _initial_nodal(profile, sys.op), "nodal")
    norm = float(np.linalg.norm(coeffs))
    if norm == 0.0:
        raise ValueError(f"profile {profile!r} projects to zero on the "
                         f"first {sys.n_modes} modes")
    return coeffs * (scale / norm)


def _run_check(cfg, op, threads):
    exp = cfg.experiment
    grid = SampleGrid(n_u=exp["n_u"], n_states=exp["n_states"])
    reports = list(check_f(cfg.drift_f, grid))
    reports.append(check_h(cfg.drift_h, grid))
    reports.extend(check_sigma(cfg.noise, cfg.drift_f, grid))
    profile = derive_profile(cfg.drift_f, cfg.drift_h, cfg.noise, op)
    reports.extend(check_abstract(profile, cfg.drift_f, cfg.drift_h,
                                  cfg.noise, op, grid))
    rows = [[r.condition, str(r.passed).lower(), repr(r.margin)]
            for r in reports]
    failed = [r.condition for r in reports if not r.passed]
    results = {
        "all_passed": not failed,
        "n_checks": len(reports),
        "failed": failed,
        "checks": [r.to_json_dict() for r in reports],
        "profile": {
            "alpha2": profile.alpha2, "alpha3": profile.alpha3,
            "alpha4": profile.alpha4, "q_list": list(profile.q_list),
            "qhat_list": list(profile.qhat_list),
            "g_constant": profile.g_constant,
        },
    }
    files = [("checks.csv", _csv_text(["condition", "pass", "margin"], rows))]
    line = ("all hypothesis checks passed" if not failed
            else f"FAILED: {', '.join(failed)}")
    return results, files, line


def _run_eig(cfg, op, threads):
    count = cfg.experiment["count"] or op.dim
    values = op.eigenvalues[:count]
    rows = [[str(i + 1), repr(float(v))] for i, v in enumerate(values)]
    results = {
        "count": len(values),
        "lambda_1": float(values[0]),
        "lambda_max": float(values[-1]),
        "mode": cfg.space_mode,
    }
    files = [("eigenvalues.csv", _csv_text(["index", "eigenvalue"], rows))]
    return results, files, f"wrote {len(values)} eigenvalues"


def _run_simulate(cfg, op, threads):
    exp = cfg.experiment
    sys = make_system(op, cfg.drift_f, cfg.drift_h, cfg.noise, exp["n_modes"])
    x = _initial_eigen(sys, exp["initial_profile"], exp["initial_scale"])
    traj = simulate_path(sys, cfg.scheme, x, exp["path_index"])
    header = (["t"] + [f"c_{i + 1}" for i in range(sys.n_modes)]
              + ["H_norm", "V1_seminorm", "V2_norm"])
    rows = []
    for k, t in enumerate(traj.times):
        rows.append([repr(float(t))]
                    + [repr(float(c)) for c in traj.coeffs[k]]
                    + [repr(float(traj.h_norms[k])),
                       repr(float(traj.v1_seminorms[k])),
                       repr(float(traj.v2_norms[k]))])
    results = {
        "n_steps": len(traj.times) - 1,
        "sup_H": float(traj.sup_h),
        "final_H": float(traj.h_norms[-1]),
        "int_V1_sq": float(traj.int_v1_sq),
        "int_V2_p": float(traj.int_v2_p),
    }
    files = [("trajectory.csv", _csv_text(header, rows))]
    return results, files, f"simulated one path, {results['n_steps']} steps"


def _run_moments(cfg, op, threads):
    exp = cfg.experiment
    header = ["n_modes", "x_h_norm", "p_exp", "functional",
              "estimate", "stderr", "ratio_2p", "ratio_beta"]
    rows, reports = [], []
    for n in exp["levels"]:
        sys = make_system(op, cfg.drift_f, cfg.drift_h, cfg.noise, n)
        for scale in exp["initial_scales"]:
            x = _initial_eigen(sys, exp["initial_profile"], scale)
            for pe in exp["p_exp"]:
                rep = mc_moments(sys, cfg.scheme, x, exp["n_paths"],
                                 p_exp=pe, beta_exp=exp["beta_exp"],
                                 threads=threads)
                reports.append(rep)
                for key in FUNCTIONAL_KEYS:
                    rows.append([str(n), repr(scale), repr(pe), key,
                                 repr(rep.estimates[key]),
                                 repr(rep.stderrs[key]),
                                 repr(rep.ratios_2p[key]),
                                 repr(rep.ratios_beta[key])])
    uniformity = {}
    can_check = len(exp["levels"]) >= 3 and len(exp["initial_scales"]) >= 2
    for pe in exp["p_exp"]:
        if not can_check:
            uniformity[repr(pe)] = "skipped: needs three levels and two " \
                                   "initial magnitudes"
            continue
        subset = [r for r in reports if r.p_exp == pe]
        summary = uniformity_check(subset, spread_limit=exp["spread_limit"])
        uniformity[repr(pe)] = {
            "verdict": summary.verdict,
            "worst_key": summary.worst_key,
            "worst_factor": summary.worst_factor,
            "spread_factors": _jsonable(summary.spread_factors),
            "fit_slope": summary.fit_slope,
            "fit_intercept": summary.fit_intercept,
            "levels": list(summary.levels),
            "x_norms": list(summary.x_norms),
            "spread_limit": summary.spread_limit,
        }
    results = {
        "n_reports": len(reports),
        "uniformity": uniformity,
        "notes": sorted({note for r in reports for note in r.notes}),
    }
    files = [("moments.csv", _csv_text(header, rows))]
    verdicts = [v["verdict"] if isinstance(v, dict) else "skipped"
                for v in uniformity.values()]
    return results, files, f"moment table done, uniformity: {verdicts}"


def _run_aldous(cfg, op, threads):
    exp = cfg.experiment
    sys = make_system(op, cfg.drift_f, cfg.drift_h, cfg.noise, exp["n_modes"])
    x = _initial_eigen(sys, exp["initial_profile"], exp["initial_scale"])
    h_test = np.zeros(exp["n_modes"])
    h_test[exp["h_mode"] - 1] = 1.0
    curve = aldous_modulus(
        sys, cfg.scheme, x, h_test, exp["delta_grid"], exp["theta_grid"],
        exp["n_paths"], threads=threads, test_id=f"mode {exp['h_mode']}",
        excursion_quantile=exp["excursion_quantile"],
        excursion_limit=exp["excursion_limit"])
    header, rows = curve.to_csv_rows()
    profile = derive_profile(cfg.drift_f, cfg.drift_h, cfg.noise, op)
    noise_exps = [(qj - qhat) / (2.0 * qj)
                  for qj, qhat in zip(profile.q_list, profile.qhat_list)]
    results = {
        "slope": _jsonable(curve.slope),
        "fit_intercept": _jsonable(curve.fit_intercept),
        "fit_points": curve.fit_points,
        "test_id": curve.test_id,
        "peak_thetas": list(curve.peak_thetas),
        "excursion_ratio": curve.excursion_ratio,
        "excursion_flagged": curve.excursion_flagged,
        "reference_slopes": {
            "drift": 1.0 / profile.q_tilde,
            "noise": min(noise_exps),
            "noise_exponents": noise_exps,
        },
        "notes": list(curve.notes),
    }
    files = [("modulus.csv", _csv_text(header, rows))]
    return results, files, f"modulus over {len(curve.deltas)} lags, " \
                           f"slope {curve.slope:.3f}"


def _run_converge(cfg, op, threads):
    exp = cfg.experiment
    def factory(n):
        return make_system(op, cfg.drift_f, cfg.drift_h, cfg.noise, n)

    x = exp["initial_scale"] * _initial_nodal(exp["initial_profile"], op)
    table = galerkin_convergence(factory, cfg.scheme, x, exp["levels"],
                                 exp["n_paths"], threads=threads)
    header, rows = table.to_csv_rows()
    sup = table.sup_dual_sq
    results = {
        "pair_labels": list(table.pair_labels),
        "sup_dual_sq": list(sup),
        "sup_dual_se": list(table.sup_dual_se),
        "int_H_sq": list(table.int_h_sq),
        "int_H_se": list(table.int_h_se),
        "decreasing": all(a > b for a, b in zip(sup, sup[1:])),
    }
    files = [("convergence.csv", _csv_text(header, rows))]
    return results, files, f"convergence across levels {table.levels}"


_RUNNERS = {
    "check": _run_check,
    "eig": _run_eig,
    "simulate": _run_simulate,
    "moments": _run_moments,
    "aldous": _run_aldous,
    "converge": _run_converge,
}


def write_artifacts(outdir: Path, files) -> list[Path]:
    """Write named text artifacts plus a MANIFEST.txt of checksums.
    Nothing is left behind if any write fails."""
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        digests = {}
        for name, text in files:
            data = text.encode()
            path = outdir / name
            path.write_bytes(data)
            written.append(path)
            digests[name] = hashlib.sha256(data).hexdigest()
        manifest = "".join(f"{digests[name]}  {name}\n"
                           for name in sorted(digests))
        path = outdir / "MANIFEST.txt"
        path.write_bytes(manifest.encode())
        written.append(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written


def run(cfg: ExperimentConfig, threads: int | None = None,
        dump_operator: bool = False) -> list[Path]:
    """Run one experiment and persist its artifact set."""
    started = time.perf_counter()
    op = _assemble(cfg)
    results, files, line = _RUNNERS[cfg.kind](cfg, op, threads)
    wall = time.perf_counter() - started

    if dump_operator:
        rows = [[str(i), str(j), repr(float(v))]
                for (i, j), v in np.ndenumerate(op.stiffness) if v != 0.0]
        files.append(("operator.csv",
                      _csv_text(["row", "col", "value"], rows)))

    report = {
        "kind": cfg.kind,
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "versions": {
            "frsde": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(map(str, _sys.version_info[:3])),
        },
        "operator_warnings": list(op.warnings),
        "results": _jsonable(results),
        "timing": {
            "wall_seconds": wall,
            "threads": resolve_threads(threads),
        },
    }
    files = [("report.json",
              json.dumps(report, sort_keys=True, indent=2) + "\n")] + files
    written = write_artifacts(Path(cfg.output_dir), files)
    print(line)
    print(f"wrote {len(written)} files to {cfg.output_dir}")
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="frsde",
        description="Galerkin simulation and hypothesis checking for "
                    "fractional stochastic reaction-diffusion equations.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None,
                       help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: FRSDE_THREADS or "
                            "all cores)")
        p.add_argument("--dump-operator", action="store_true",
                       help="also write the stiffness matrix as a CSV")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if cfg.kind != args.kind:
            raise ConfigError([
                f"config declares kind '{cfg.kind}' but the command "
                f"line asked for '{args.kind}'"])
        cfg = with_overrides(cfg, seed=args.seed, output_dir=args.out)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=_sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2

    try:
        run(cfg, threads=args.threads, dump_operator=args.dump_operator)
    except (FloatingPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
