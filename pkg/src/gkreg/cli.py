"""Experiment runner: ``gkreg run | validate | sweep``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import _kernels
from .hybrid import hyb_lsmr, select_best_k, select_k_discrepancy
from .krylov import LsqrOptions
from .plotting import error_curve_svg, pgm_bytes
from .problems import PROBLEMS_1D, make_problem
from .validation import TAGS, run_checks

CSV_HEADER = ["k", "relative_error", "residual_norm", "inner_iterations", "cumulative_elapsed_ms"]
SEMI_CONVERGENCE_FACTOR = 1.2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str = "shaw"
    n: int = 1000          # side length N for problem "blur"
    noise: float = 1e-2
    L: str | None = None   # identity | d1 | d2d-kron; default d1 (1-D) or d2d-kron (blur)
    kmax: int = 30
    tol: float = 1e-6
    seed: int = 0
    out: str = "out"
    reorth: bool | None = None
    band: int | None = None
    sigma: float = 2.0
    tau: float = 1.01
    timing: bool = False   # wall-clock column in results.csv; off keeps the CSV reproducible

    def __post_init__(self):
        if self.L is None:
            self.L = "d2d-kron" if self.problem == "blur" else "d1"
        if self.problem not in PROBLEMS_1D + ("blur",):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.L not in ("identity", "d1", "d2d-kron"):
            raise ConfigError(f"unknown L {self.L!r}")
        if self.n <= 0 or self.kmax <= 0 or self.tol <= 0 or self.sigma < 0:
            raise ConfigError("n, kmax and tol must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        size = self.n * self.n if self.problem == "blur" else self.n
        if self.kmax > size:
            raise ConfigError(f"kmax={self.kmax} exceeds min(m, n)={size}")

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)


def _fmt(x):
    return f"{x:.17g}"


def _atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _prepare_outdir(out):
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path):
            pass
    except OSError as exc:
        raise ConfigError(f"output directory {out!r} is not writable: {exc}") from exc
    return path


def results_csv(run, timing=False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in run.records:
        ms = r.elapsed * 1e3 if timing else 0.0
        w.writerow([r.k, _fmt(r.relative_error), _fmt(r.residual_norm), r.inner_iterations, _fmt(ms)])
    return buf.getvalue()


def execute(config: ExperimentConfig):
    """Build the problem and run hyb-LSMR; returns (problem, run, summary dict)."""
    problem = make_problem(config.problem, config.n, config.noise, config.L, config.seed,
                           band=config.band, sigma=config.sigma)
    t0 = time.perf_counter()
    run = hyb_lsmr(problem, config.kmax, LsqrOptions(tol=config.tol), reorthogonalize=config.reorth)
    total_ms = (time.perf_counter() - t0) * 1e3
    if not run.records:
        raise RuntimeError(f"no iterates produced: {run.stop_reason}")
    errs = run.relative_errors
    best_k = select_best_k(run)
    summary = {
        "config": asdict(config),
        "best_k": best_k,
        "min_relative_error": float(errs[best_k - 1]),
        "final_k": run.records[-1].k,
        "final_relative_error": float(errs[-1]),
        "semi_convergence": bool(errs[-1] > SEMI_CONVERGENCE_FACTOR * errs[best_k - 1]),
        "noise_norm": problem.noise_norm,
        "tau": config.tau,
        "discrepancy_k": None,
        "discrepancy_crossed": None,
        "stop_reason": run.stop_reason,
        "breakdown_at": run.metadata.get("breakdown_at"),
        "reorthogonalize": run.metadata["reorthogonalize"],
        "inner_iterations": run.inner_iterations,
        "inner_stop_reasons": [r.inner_stop_reason for r in run.records],
        "total_elapsed_ms": total_ms,
        "kernels": "numba" if _kernels.USE_NUMBA else "numpy",
    }
    if problem.noise_norm > 0:
        k_dp, crossed = select_k_discrepancy(run, problem.noise_norm, config.tau)
        summary["discrepancy_k"], summary["discrepancy_crossed"] = k_dp, crossed
    return problem, run, summary


def run_command(config: ExperimentConfig):
    out = _prepare_outdir(config.out)
    problem, run, summary = execute(config)
    _atomic_write(out / "results.csv", results_csv(run, config.timing).encode())
    _atomic_write(out / "summary.json", (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode())
    title = f"{config.problem}, noise {config.noise:g}, L = {config.L}"
    _atomic_write(out / "curve.svg", error_curve_svg(run.ks, run.relative_errors, title).encode())
    if config.problem == "blur":
        N = config.n
        best = run.record(summary["best_k"]).x_Lk
        _atomic_write(out / "x_true.pgm", pgm_bytes(problem.x_true.reshape((N, N), order="F")))
        _atomic_write(out / "x_best.pgm", pgm_bytes(best.reshape((N, N), order="F")))
    return summary


def _sweep_one(args):
    config, seed = args
    cfg = ExperimentConfig.from_mapping({**asdict(config), "seed": seed})
    _, _, s = execute(cfg)
    return {"seed": seed, "min_relative_error": s["min_relative_error"], "best_k": s["best_k"],
            "discrepancy_k": s["discrepancy_k"], "final_relative_error": s["final_relative_error"],
            "max_inner_iterations": max(s["inner_iterations"]), "elapsed_ms": s["total_elapsed_ms"]}


def sweep_command(config: ExperimentConfig, seeds):
    if len(seeds) < 2:
        raise ConfigError("sweep needs at least 2 seeds")
    out = _prepare_outdir(config.out)
    workers = max(1, min(int(os.environ.get("GKREG_THREADS", "1") or 1), len(seeds)))
    jobs = [(config, s) for s in seeds]
    if workers == 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    errs = np.array([r["min_relative_error"] for r in rows])
    q1, med, q3 = np.percentile(errs, [25, 50, 75])
    summary = {
        "config": asdict(config),
        "seeds": list(seeds),
        "median_min_relative_error": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "iqr": float(q3 - q1),
        "best_k": [r["best_k"] for r in rows],
        "per_seed": rows,
    }
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "min_relative_error", "best_k", "discrepancy_k", "final_relative_error"])
    for r in rows:
        w.writerow([r["seed"], _fmt(r["min_relative_error"]), r["best_k"],
                    "" if r["discrepancy_k"] is None else r["discrepancy_k"],
                    _fmt(r["final_relative_error"])])
    _atomic_write(out / "sweep.csv", buf.getvalue().encode())
    _atomic_write(out / "sweep_summary.json", (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode())
    return summary


def _parse_seeds(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _add_experiment_args(p):
    p.add_argument("--config", help="flat JSON file with the same keys as the flags")
    p.add_argument("--problem", choices=PROBLEMS_1D + ("blur",))
    p.add_argument("--n", type=int, help="problem size (image side N for blur)")
    p.add_argument("--noise", type=float, help="relative noise level epsilon")
    p.add_argument("--L", dest="L", choices=["identity", "d1", "d2d-kron"])
    p.add_argument("--kmax", type=int)
    p.add_argument("--tol", type=float, help="inner LSQR tolerance")
    p.add_argument("--out")
    p.add_argument("--no-reorth", dest="reorth", action="store_const", const=False,
                   help="disable reorthogonalization in the bidiagonalization")
    p.add_argument("--band", type=int, help="blur half-bandwidth")
    p.add_argument("--sigma", type=float, help="blur Gaussian spread")
    p.add_argument("--tau", type=float, help="discrepancy principle safety factor")
    p.add_argument("--timing", action="store_const", const=True,
                   help="write wall-clock milliseconds into results.csv")


def _config_from_args(args, exclude=()):
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
    for f in fields(ExperimentConfig):
        if f.name in exclude:
            continue
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return ExperimentConfig.from_mapping(values)


def build_parser():
    parser = argparse.ArgumentParser(prog="gkreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run hyb-LSMR on one problem")
    _add_experiment_args(p_run)
    p_run.add_argument("--seed", type=int)

    p_val = sub.add_parser("validate", help="dense oracle checks at n <= 60")
    p_val.add_argument("--filter", choices=TAGS)

    p_sw = sub.add_parser("sweep", help="repeat a run over several noise seeds")
    _add_experiment_args(p_sw)
    p_sw.add_argument("--seeds", required=True, help="comma list and/or ranges, e.g. 0-9 or 1,4,7")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            failed = 0
            for r in run_checks(args.filter):
                status = "PASS" if r.passed else "FAIL"
                failed += not r.passed
                print(f"[{status}] {r.tag:8s} {r.name}: {r.detail} ({r.seconds:.2f}s)")
            return 1 if failed else 0
        if args.command == "run":
            s = run_command(_config_from_args(args))
            print(f"best k = {s['best_k']}, min relative error = {s['min_relative_error']:.4f}, "
                  f"discrepancy k = {s['discrepancy_k']}, {s['total_elapsed_ms']:.0f} ms")
            return 0
        if args.command == "sweep":
            s = sweep_command(_config_from_args(args, exclude=("seed",)), _parse_seeds(args.seeds))
            print(f"median min relative error = {s['median_min_relative_error']:.4f} "
                  f"(IQR {s['iqr']:.4f}), best k per seed = {s['best_k']}")
            return 0
    except ConfigError as exc:
        print(f"gkreg: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
