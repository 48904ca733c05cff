"""Command-line front end: ``mlabel solve | embed | bench``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pipeline, pnm
from .grid import Grid
from .potentials import (
    EmbeddingMatrix,
    Envelope,
    Euclidean,
    MetricError,
    RegularizerSpec,
    build_named_potential,
    classical_scaling_embed,
    exact_embedding,
    validate_metric,
)
from .solvers import (
    SOLVERS,
    SaddleProblem,
    SolverConfig,
    Termination,
    solve_douglas_rachford,
    solve_fpd,
    solve_nesterov,
)

log = logging.getLogger("mlabel")

EXIT_OK, EXIT_CONFIG, EXIT_MAX_ITER = 0, 1, 2
BENCH_COLUMNS = ("suite", "size", "lambda", "solver", "iterations", "seconds", "rel_gap", "reached")


class ConfigError(ValueError):
    def __init__(self, fld: str, msg: str):
        self.field = fld
        super().__init__(f"config field '{fld}': {msg}")


@dataclass
class ExperimentConfig:
    input: dict
    potential: dict
    regularizer: str = "euclidean"
    lam: float = 1.0
    solver: dict = field(default_factory=lambda: {"name": "dr"})
    binarization: str = "psi"
    output: str = "out"
    seed: int = 0
    labels: dict | None = None
    base: Path = Path(".")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        known = {"input", "potential", "regularizer", "lambda", "solver", "binarization",
                 "output", "seed", "labels"}
        extra = set(data) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown field")
        for req in ("input", "potential"):
            if req not in data:
                raise ConfigError(req, "missing")
        cfg = cls(
            input=data["input"],
            potential=data["potential"],
            regularizer=data.get("regularizer", "euclidean"),
            lam=data.get("lambda", 1.0),
            solver=data.get("solver", {"name": "dr"}),
            binarization=data.get("binarization", "psi"),
            output=data.get("output", "out"),
            seed=data.get("seed", 0),
            labels=data.get("labels"),
            base=path.parent,
        )
        cfg.validate()
        return cfg

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base / q

    def validate(self) -> None:
        if self.regularizer not in ("euclidean", "envelope"):
            raise ConfigError("regularizer", "must be 'euclidean' or 'envelope'")
        if not isinstance(self.lam, (int, float)) or not self.lam > 0:
            raise ConfigError("lambda", "must be a positive number")
        if self.binarization not in ("psi", "first_max"):
            raise ConfigError("binarization", "must be 'psi' or 'first_max'")
        name = self.solver.get("name", "dr")
        if name not in SOLVERS:
            raise ConfigError("solver.name", f"must be one of {sorted(SOLVERS)}")
        if "benchmark" not in self.input and "image" not in self.input:
            raise ConfigError("input", "needs 'benchmark' or 'image'")
        if "image" in self.input and self.labels is None:
            raise ConfigError("labels", "required when the input is an image")
        if "matrix" not in self.potential and "name" not in self.potential:
            raise ConfigError("potential", "needs 'name' or 'matrix'")

    def solver_config(self) -> SolverConfig:
        opts = {k: v for k, v in self.solver.items() if k != "name"}
        try:
            return SolverConfig(**opts)
        except TypeError as exc:
            raise ConfigError("solver", str(exc)) from None
        except ValueError as exc:
            raise ConfigError("solver", str(exc)) from None


def _load_labels(cfg: ExperimentConfig) -> pipeline.LabelSet:
    spec = cfg.labels
    if "prototypes" in spec:
        protos = spec["prototypes"]
    elif "prototypes_file" in spec:
        path = cfg.resolve(spec["prototypes_file"])
        if not path.exists():
            raise ConfigError("labels.prototypes_file", f"file not found: {path}")
        protos = json.loads(path.read_text())
    else:
        raise ConfigError("labels", "needs 'prototypes' or 'prototypes_file'")
    try:
        return pipeline.LabelSet(np.asarray(protos, dtype=float), spec.get("names"))
    except ValueError as exc:
        raise ConfigError("labels", str(exc)) from None


def _load_input(cfg: ExperimentConfig):
    """Return ``(grid, data term, label set, benchmark or None)``."""
    inp = cfg.input
    if "benchmark" in inp:
        params = {k: v for k, v in inp.items() if k not in ("benchmark", "size")}
        try:
            bench = pipeline.generate_benchmark(inp["benchmark"], int(inp.get("size", 64)),
                                                seed=cfg.seed, **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError("input", str(exc)) from None
        labels = _load_labels(cfg) if cfg.labels is not None else bench.labels
        if cfg.labels is not None:
            bench.labels = labels
        return bench.grid, bench.data_term(), labels, bench
    path = cfg.resolve(inp["image"])
    if not path.exists():
        raise ConfigError("input.image", f"file not found: {path}")
    try:
        img = pnm.read_pnm(path)
    except ValueError as exc:
        raise ConfigError("input.image", str(exc)) from None
    labels = _load_labels(cfg)
    try:
        s = pipeline.build_l1_data_term(img, labels)
    except ValueError as exc:
        raise ConfigError("labels", str(exc)) from None
    return Grid(img.shape[:2]), s, labels, None


def _load_metric(cfg: ExperimentConfig, l: int, allow_zero: bool = False):
    pot = cfg.potential
    try:
        if "matrix" in pot:
            path = cfg.resolve(pot["matrix"])
            if not path.exists():
                raise ConfigError("potential.matrix", f"file not found: {path}")
            data = json.loads(path.read_text())
            mat = data["metric"] if isinstance(data, dict) else data
            return validate_metric(mat, allow_zero=allow_zero)
        params = {k: v for k, v in pot.items() if k not in ("name", "embedding")}
        return build_named_potential(pot["name"], l, **params)
    except MetricError as exc:
        raise ConfigError("potential", str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("potential", str(exc)) from None


def _regularizer(cfg: ExperimentConfig, metric) -> RegularizerSpec:
    if cfg.regularizer == "envelope":
        return RegularizerSpec(Envelope(metric), float(cfg.lam))
    pot = cfg.potential
    name = pot.get("name", "").lower()
    if "embedding" in pot:
        path = cfg.resolve(pot["embedding"])
        try:
            emb = EmbeddingMatrix.from_json(json.loads(path.read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("potential.embedding", f"cannot read {path}: {exc}") from None
    elif name == "potts":
        emb = exact_embedding("potts", metric.l)
    elif name == "linear":
        emb = exact_embedding("linear", metric.l, pot.get("c", 1.0))
    else:
        emb = classical_scaling_embed(metric)
        log.info("classical scaling embedding: k=%d eps_E=%.6g", emb.k, emb.eps)
    if emb.l != metric.l:
        raise ConfigError("potential.embedding", f"has {emb.l} labels, expected {metric.l}")
    return RegularizerSpec(Euclidean(emb), float(cfg.lam))


def _write_outputs(out: Path, grid: Grid, report, labels, l: int, summary: dict, groups=None):
    """Write the result files. ``l`` counts the original labels; the relaxed
    field has one column per merged class when ``groups`` is given."""
    out.mkdir(parents=True, exist_ok=True)
    lr = report.u.shape[1]
    relaxed = {"dims": list(grid.dims), "l": lr, "u": report.u.tolist()}
    if groups is not None:
        relaxed["groups"] = groups
    (out / "relaxed.json").write_text(json.dumps(relaxed))
    (out / "labels.json").write_text(json.dumps({"dims": list(grid.dims), "l": l, "labels": labels.tolist()}))
    if grid.d == 2:
        for i in range(lr):
            pnm.write_pgm(out / f"class_{i:02d}.pgm", report.u[:, i].reshape(grid.dims))
        pnm.write_pgm(out / "labels.pgm", pnm.label_image(labels.reshape(grid.dims), l))
    report.to_csv(out / "convergence.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2))


def cmd_solve(args) -> int:
    try:
        cfg = ExperimentConfig.from_json(args.config)
        grid, s, labels, bench = _load_input(cfg)
        metric = _load_metric(cfg, labels.l, allow_zero=True)
        class_map = None
        s_full = s
        if np.any((metric.D + np.eye(metric.l)) <= 1e-12):
            s, metric, class_map = pipeline.collapse_zero_distance_classes(s, metric.D)
            log.info("merged zero-distance classes: %s", class_map.groups)
        reg = _regularizer(cfg, metric)
        scfg = cfg.solver_config()
        problem = SaddleProblem(grid, s, reg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = cfg.resolve(cfg.output) if not Path(cfg.output).is_absolute() else Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    try:
        solver = SOLVERS[cfg.solver.get("name", "dr")]
        log.info("solving n=%d l=%d regularizer=%s lambda=%g with %s",
                 grid.n, reg.l, cfg.regularizer, cfg.lam, solver.__name__)
        try:
            report = solver(problem, scfg)
        except ValueError as exc:
            print(f"error: config field 'solver': {exc}", file=sys.stderr)
            return EXIT_CONFIG
        log.info("finished: %s after %d iterations", report.termination.value, report.iterations)

        if cfg.binarization == "psi":
            lab = pipeline.binarize_psi_nearest(report.u, problem)
        else:
            lab = pipeline.binarize_first_max(report.u)
        bin_report = pipeline.binarization_bound(lab, report.u, report.v, problem, cfg.binarization)
        if class_map is not None:
            lab = class_map.expand(lab, s_full)
        summary = report.summary()
        if reg.is_envelope:
            summary["gap"] = "unavailable"
            summary["rel_gap"] = "unavailable"
            summary["dual_plateau"] = report.termination is Termination.DUAL_PLATEAU
        summary["binarization"] = bin_report.to_json()
        if bench is not None:
            summary["benchmark"] = bench.name
            summary["accuracy_vs_truth"] = float(np.mean(lab == bench.truth.ravel()))
        _write_outputs(out, grid, report, lab, s_full.shape[1], summary,
                       None if class_map is None else class_map.groups)
    finally:
        log.removeHandler(handler)
        handler.close()
    if report.termination is Termination.MAX_ITER:
        print(f"warning: stopped at max_iter={report.iterations} without reaching the target",
              file=sys.stderr)
        return EXIT_MAX_ITER
    return EXIT_OK


def _embed_source(args):
    if args.matrix:
        data = json.loads(Path(args.matrix).read_text())
        mat = data["metric"] if isinstance(data, dict) else data
        return validate_metric(mat), None
    if args.labels is None:
        raise ValueError("--labels is required with --potential")
    params = {}
    if args.c is not None:
        params["c"] = args.c
    if args.cap is not None:
        params["cap"] = args.cap
    return build_named_potential(args.potential, args.labels, **params), args.potential.lower()


def cmd_embed(args) -> int:
    try:
        metric, name = _embed_source(args)
    except MetricError as exc:
        print(f"error: {exc} (axiom={exc.axiom}, witness={exc.indices})", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.method == "exact" or (args.method == "auto" and name in ("potts", "linear")):
        if name not in ("potts", "linear"):
            print("error: exact embeddings exist only for potts and linear", file=sys.stderr)
            return EXIT_CONFIG
        emb = exact_embedding(name, metric.l, args.c if args.c is not None else 1.0)
    else:
        emb = classical_scaling_embed(metric)
    err = np.abs(emb.distances() - metric.D)
    print(f"l={emb.l} k={emb.k} eps_E={emb.eps:.6g}")
    print("pairwise |embedded - requested| distance error:")
    width = max(8, len(f"{err.max():.2e}") + 1)
    print("     " + "".join(f"{j:>{width}d}" for j in range(emb.l)))
    for i in range(emb.l):
        print(f"{i:>4d} " + "".join(f"{err[i, j]:>{width}.2e}" for j in range(emb.l)))
    if args.out:
        Path(args.out).write_text(json.dumps(emb.to_json(), indent=2))
    return EXIT_OK


def bench_rows(suite: str, sizes, seed: int, target: float, max_iter: int,
               lam_ref: float = 2.0, ref_size: int = 64, sigma: float | None = 0.3,
               nesterov_iters: int | None = None):
    """Run all three solvers per size; yields one row dict per (size, solver).

    The weight is ``lam_ref`` at ``ref_size`` and scales with the image width,
    so that every size shows structurally comparable results. ``sigma`` is
    the benchmark noise level (None keeps the generator's default).
    """
    extra = {} if sigma is None else {"sigma": sigma}
    for size in sizes:
        bench = pipeline.generate_benchmark(suite, size, seed=seed, **extra)
        l = bench.labels.l
        lam = lam_ref * size / ref_size
        reg = RegularizerSpec(Euclidean(exact_embedding("potts", l)), lam)
        problem = SaddleProblem(bench.grid, bench.data_term(), reg)
        cfg = SolverConfig(max_iter=max_iter, rel_gap_tol=target)
        ncfg = SolverConfig(max_iter=max_iter, rel_gap_tol=target,
                            nesterov_iters=(nesterov_iters or max_iter) - 1)
        for name, fn, c in (("fpd", solve_fpd, cfg), ("dr", solve_douglas_rachford, cfg),
                            ("nesterov", solve_nesterov, ncfg)):
            t0 = time.perf_counter()
            rep = fn(problem, c)
            secs = time.perf_counter() - t0
            yield {
                "suite": suite, "size": size, "lambda": lam, "solver": name,
                "iterations": rep.iterations, "seconds": secs,
                "rel_gap": rep.final["rel_gap"],
                "reached": int(rep.termination is Termination.GAP_REACHED),
            }


def write_bench_csv(rows, fh) -> None:
    fh.write("# mlabel bench v1; seconds are wall-clock and vary between runs\n")
    w = csv.writer(fh)
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in BENCH_COLUMNS])
        fh.flush()


def read_bench_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cmd_bench(args) -> int:
    try:
        sizes = [int(x) for x in args.sizes.split(",") if x]
    except ValueError:
        print(f"error: --sizes must be comma-separated integers, got {args.sizes!r}", file=sys.stderr)
        return EXIT_CONFIG
    rows = bench_rows(args.suite, sizes, args.seed, args.target, args.max_iter, args.lam,
                      sigma=args.sigma)
    try:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                write_bench_csv(rows, fh)
        else:
            write_bench_csv(rows, sys.stdout)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlabel", description=__doc__)
    ap.add_argument("--threads", type=int, default=None, help="cap on numerical worker threads")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve one labeling problem from a JSON config")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_solve)

    ep = sub.add_parser("embed", help="Euclidean embedding of an interaction potential")
    src = ep.add_mutually_exclusive_group(required=True)
    src.add_argument("--potential", help="potts | linear | truncated_linear")
    src.add_argument("--matrix", help="JSON file with a distance matrix")
    ep.add_argument("--labels", type=int)
    ep.add_argument("--c", type=float, default=None)
    ep.add_argument("--cap", type=float, default=None)
    ep.add_argument("--method", choices=("auto", "exact", "classical"), default="auto")
    ep.add_argument("--out")
    ep.set_defaults(func=cmd_embed)

    bp = sub.add_parser("bench", help="solver comparison over image sizes")
    bp.add_argument("--suite", default="fourcolors")
    bp.add_argument("--sizes", default="16,32,64")
    bp.add_argument("--seed", type=int, default=0)
    bp.add_argument("--target", type=float, default=1e-4)
    bp.add_argument("--max-iter", type=int, default=2000)
    bp.add_argument("--lam", type=float, default=2.0, help="weight at 64x64, scaled with size")
    bp.add_argument("--sigma", type=float, default=0.3, help="benchmark noise level")
    bp.add_argument("--out")
    bp.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(message)s")
    log.setLevel(logging.INFO)
    if args.threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            return args.func(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
