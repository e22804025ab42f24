"""Command-line pipeline: simulate, train, predict, evaluate, sweep, plot.

Exit codes: 0 success, 1 usage error, 2 data or file error, 3 no feasible
hard-margin assignment.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import classifier as clf
from .coalescent import DEFAULT_C_GRID, RNG_NAME, SimConfig, generate_dataset, write_dataset
from .hard import CASE1, CASE2A, CASE2B, CASE3, CASE4, IndexAssignment, best_assignment_for_case
from .phylo import read_ultrametric_csv, write_ultrametric_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3

SWEEP_HEADER = "C,proportion,strategy,repeat,accuracy,wall_time_s"
SUMMARY_HEADER = "C,proportion,strategy,aggregate,accuracy,n_repeats"
ALGORITHM_STRATEGIES = {"alg1": (CASE1,), "alg2": (CASE2A, CASE2B), "alg3": (CASE3,), "alg4": (CASE4,)}
SWEEP_STRATEGIES = tuple(ALGORITHM_STRATEGIES) + ("hard_enumerate",)
DEFAULT_PROPORTIONS = (0.15, 0.20, 0.25)


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


# --------------------------------------------------------------------------
# assignments
# --------------------------------------------------------------------------

def resolve_assignment(spec: str, P: np.ndarray, Q: np.ndarray) -> IndexAssignment:
    """``"i_P,j_P,i_Q,j_Q"`` or ``"auto:<case>"`` (best closed-form margin in that case)."""
    if spec.startswith("auto:"):
        return best_assignment_for_case(P, Q, spec.split(":", 1)[1])
    return IndexAssignment.parse(spec)


def _strategy_assignment_spec(strategy: str, spec: str) -> str:
    if spec == "auto":
        return f"auto:{ALGORITHM_STRATEGIES[strategy][0]}"
    if not spec.startswith("auto:"):
        case = IndexAssignment.parse(spec).case
        if case not in ALGORITHM_STRATEGIES[strategy]:
            raise ValueError(f"assignment {spec} is {case}, which {strategy} does not handle")
    elif spec.split(":", 1)[1] not in ALGORITHM_STRATEGIES[strategy]:
        raise ValueError(f"{spec} does not match {strategy}")
    return spec


# --------------------------------------------------------------------------
# data helpers
# --------------------------------------------------------------------------

def load_labeled(path: str | Path) -> tuple[int, np.ndarray, list[str]]:
    n_leaves, pts, labels = read_ultrametric_csv(path)
    if labels is None:
        raise ValueError(f"{path}: rows carry no P/Q labels")
    return n_leaves, pts, labels


def sidecar_ratio_c(path: str | Path) -> float | None:
    meta = Path(str(path) + ".meta.json")
    if not meta.exists():
        return None
    try:
        return float(json.loads(meta.read_text())["config"]["ratio_c"])
    except (KeyError, ValueError, TypeError):
        return None


def read_label_file(path: str | Path) -> list[str]:
    labels = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    bad = [lab for lab in labels if lab not in ("P", "Q")]
    if bad:
        raise ValueError(f"{path}: unknown labels {sorted(set(bad))}")
    return labels


def stratified_split(labels: Sequence[str], proportion: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per class, ``floor(proportion * n_class)`` rows go to the test set.

    A ``1e-9`` guard inside the floor keeps products such as ``0.29 * 100``
    from rounding down. Returns sorted (train, test) row indices.
    """
    if not 0 < proportion < 1:
        raise ValueError("proportion must lie in (0, 1)")
    lab = np.asarray(labels)
    test = []
    for cls in ("P", "Q"):
        idx = np.flatnonzero(lab == cls)
        k = int(math.floor(proportion * idx.size + 1e-9))
        if k:
            test.extend(rng.choice(idx, size=k, replace=False).tolist())
    test_idx = np.array(sorted(test), dtype=int)
    train_idx = np.setdiff1d(np.arange(lab.size), test_idx)
    return train_idx, test_idx


# --------------------------------------------------------------------------
# simulate / train / predict / evaluate
# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = SimConfig(n_leaves=args.n_leaves, population=args.population, ratio_c=args.ratio_c,
                    trees_per_class=args.trees_per_class, seed=args.seed)
    ds = generate_dataset(cfg)
    sidecar = write_dataset(ds, args.out)
    print(f"wrote {len(ds)} ultrametrics (d={ds.points.shape[1]}) to {args.out}; metadata in {sidecar}")
    return EXIT_OK


def cmd_train(args) -> int:
    _, pts, labels = load_labeled(args.data)
    ratio_c = args.ratio_c if args.ratio_c is not None else sidecar_ratio_c(args.data)
    if ratio_c is None:
        raise ValueError("--ratio-c is required (no dataset metadata found)")
    assignment = None
    if args.strategy == "soft_fixed_assignment":
        if not args.assignment:
            raise ValueError("soft_fixed_assignment needs --assignment (e.g. 5,6,4,2 or auto:case2a)")
        P, Q = clf.split_classes(pts, labels)
        assignment = resolve_assignment(args.assignment, P, Q)
    model = clf.train(pts, labels, args.strategy, ratio_c=ratio_c, assignment=assignment,
                      eta=args.eta, tradeoff=args.tradeoff, tol=args.tol)
    model.save(args.model_out)
    print(f"assignment={model.assignment} case={model.case} margin={model.margin!r}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = clf.TrainedModel.load(args.model)
    _, pts, _ = read_ultrametric_csv(args.data)
    if pts.shape[1] != model.dimension:
        raise ValueError(f"data dimension {pts.shape[1]} does not match model dimension {model.dimension}")
    text = "".join(f"{lab}\n" for lab in clf.predict(pts, model))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _, pts, labels = load_labeled(args.data)
    if args.predictions:
        report = clf.score(labels, read_label_file(args.predictions))
    else:
        model = clf.TrainedModel.load(args.model)
        if pts.shape[1] != model.dimension:
            raise ValueError(f"data dimension {pts.shape[1]} does not match model dimension {model.dimension}")
        report = clf.evaluate(pts, labels, model)
    text = report.summary()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    proportions: tuple[float, ...] = DEFAULT_PROPORTIONS
    repeats: int = 10
    strategies: tuple[str, ...] = ("alg1", "alg2", "alg3", "alg4")
    assignments: dict[str, str] = field(default_factory=dict)
    aggregate: str = "best"
    seed: int = 0
    trees_per_class: int = 100
    n_leaves: int = 5
    population: float = 10000.0
    eta: float = clf.DEFAULT_ETA
    tradeoff: float = 1.0
    timing: bool = True

    def __post_init__(self):
        if any(not 0 < p < 1 for p in self.proportions):
            raise ValueError("proportions must lie in (0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.aggregate not in ("best", "mean"):
            raise ValueError("aggregate must be best or mean")
        unknown = set(self.strategies) - set(SWEEP_STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}")
        resolved = {}
        for s in self.strategies:
            if s in ALGORITHM_STRATEGIES:
                resolved[s] = _strategy_assignment_spec(s, self.assignments.get(s, "auto"))
        object.__setattr__(self, "assignments", resolved)

    def cells(self) -> list[tuple[int, int, int]]:
        return [(ci, pi, r) for ci in range(len(self.c_grid))
                for pi in range(len(self.proportions)) for r in range(self.repeats)]


def dataset_seed(base: int, c_index: int) -> int:
    """Seed of the dataset simulated for the ``c_index``-th grid value."""
    return int(np.random.SeedSequence([base, c_index]).generate_state(1, np.uint64)[0])


def split_rng(base: int, c_index: int, p_index: int, repeat: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([base, c_index, p_index, repeat])))


@functools.lru_cache(maxsize=4)
def _cached_dataset(cfg: SimConfig):
    return generate_dataset(cfg)


def _fmt(x: float) -> str:
    return repr(float(x))


def run_cell(spec: SweepSpec, cell: tuple[int, int, int], save_dir: str | None = None) -> list[str]:
    """CSV lines (without newline) for one (C, proportion, repeat) cell."""
    ci, pi, rep = cell
    C, prop = spec.c_grid[ci], spec.proportions[pi]
    ds = _cached_dataset(SimConfig(n_leaves=spec.n_leaves, population=spec.population, ratio_c=C,
                                   trees_per_class=spec.trees_per_class, seed=dataset_seed(spec.seed, ci)))
    train_idx, test_idx = stratified_split(ds.labels, prop, split_rng(spec.seed, ci, pi, rep))
    labels = np.array(ds.labels)
    Xtr, ytr = ds.points[train_idx], labels[train_idx].tolist()
    Xte, yte = ds.points[test_idx], labels[test_idx].tolist()
    prefix = None
    if save_dir:
        prefix = Path(save_dir) / f"C{_fmt(C)}_p{_fmt(prop)}_r{rep}"
        write_ultrametric_csv(f"{prefix}_train.csv", Xtr, ytr, n_leaves=ds.n_leaves)
        write_ultrametric_csv(f"{prefix}_test.csv", Xte, yte, n_leaves=ds.n_leaves)
    lines = []
    for strat in spec.strategies:
        start = time.perf_counter()
        try:
            if strat == "hard_enumerate":
                model = clf.train(Xtr, ytr, "hard_enumerate", ratio_c=C, eta=spec.eta, tradeoff=spec.tradeoff)
            else:
                P, Q = clf.split_classes(Xtr, ytr)
                a = resolve_assignment(spec.assignments[strat], P, Q)
                model = clf.train(Xtr, ytr, "soft_fixed_assignment", ratio_c=C, assignment=a,
                                  eta=spec.eta, tradeoff=spec.tradeoff)
        except clf.NoFeasibleAssignment:
            model = None
        wall = time.perf_counter() - start if spec.timing else 0.0
        acc = clf.evaluate(Xte, yte, model).accuracy if model is not None else math.nan
        if model is not None and prefix is not None:
            model.save(f"{prefix}_{strat}.model")
        lines.append(f"{_fmt(C)},{_fmt(prop)},{strat},{rep},{_fmt(acc)},{wall:.6f}")
    return lines


def _read_done(path: Path) -> set[tuple[str, str, str, str]]:
    """Completed (C, proportion, strategy, repeat) keys; truncates a torn last line."""
    text = path.read_text()
    if not text.startswith(SWEEP_HEADER):
        raise ValueError(f"{path}: not a sweep CSV (header mismatch)")
    if not text.endswith("\n"):
        text = text[:text.rfind("\n") + 1]
        path.write_text(text)
    done = set()
    for line in text.splitlines()[1:]:
        parts = line.split(",")
        if len(parts) == 6:
            done.add(tuple(parts[:4]))
    return done


def run_sweep(spec: SweepSpec, out: str | Path, resume: bool = False, jobs: int = 1,
              save_dir: str | None = None) -> list[dict]:
    """Write the sweep CSV row by row and return the per-cell summary records."""
    out = Path(out)
    if save_dir:
        Path(save_dir).mkdir(parents=True, exist_ok=True)
    done: set = set()
    if resume and out.exists():
        done = _read_done(out)
    else:
        out.write_text(SWEEP_HEADER + "\n")
    todo = []
    for cell in spec.cells():
        ci, pi, rep = cell
        keys = {(_fmt(spec.c_grid[ci]), _fmt(spec.proportions[pi]), s, str(rep)) for s in spec.strategies}
        if not keys <= done:
            todo.append(cell)
    with out.open("a") as sink:
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = pool.map(functools.partial(run_cell, spec, save_dir=save_dir), todo)
                for cell, lines in zip(todo, results):
                    _emit(sink, spec, cell, lines, done)
        else:
            for cell in todo:
                _emit(sink, spec, cell, run_cell(spec, cell, save_dir), done)
    meta = {"format": "tropsvm-sweep-v1", "rng": RNG_NAME, "spec": asdict(spec),
            "dataset_seeds": {_fmt(c): dataset_seed(spec.seed, ci) for ci, c in enumerate(spec.c_grid)}}
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return summarize(out, spec.aggregate)


def _emit(sink, spec: SweepSpec, cell, lines, done) -> None:
    ci, pi, rep = cell
    for strat, line in zip(spec.strategies, lines):
        if (_fmt(spec.c_grid[ci]), _fmt(spec.proportions[pi]), strat, str(rep)) not in done:
            sink.write(line + "\n")
    sink.flush()


def summarize(path: str | Path, aggregate: str = "best") -> list[dict]:
    """Aggregate repeats per (C, proportion, strategy) by best or mean accuracy."""
    groups: dict[tuple[float, float, str], list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (float(row["C"]), float(row["proportion"]), row["strategy"])
            groups.setdefault(key, []).append(float(row["accuracy"]))
    out = []
    for (C, prop, strat), accs in sorted(groups.items()):
        vals = [a for a in accs if not math.isnan(a)]
        if not vals:
            acc = math.nan
        else:
            acc = max(vals) if aggregate == "best" else sum(vals) / len(vals)
        out.append({"C": C, "proportion": prop, "strategy": strat, "aggregate": aggregate,
                    "accuracy": acc, "n_repeats": len(vals)})
    return out


def write_summary(rows: list[dict], path: str | Path) -> None:
    lines = [SUMMARY_HEADER]
    for r in rows:
        lines.append(f"{_fmt(r['C'])},{_fmt(r['proportion'])},{r['strategy']},{r['aggregate']},"
                     f"{_fmt(r['accuracy'])},{r['n_repeats']}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_assignment_flags(values: Sequence[str] | None) -> dict[str, str]:
    out = {}
    for item in values or ():
        if "=" not in item:
            raise ValueError(f"--assignment expects STRATEGY=SPEC, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_sweep(args) -> int:
    spec = SweepSpec(c_grid=args.c_grid, proportions=args.proportions, repeats=args.repeats,
                     strategies=tuple(args.strategies.split(",")),
                     assignments=_parse_assignment_flags(args.assignment), aggregate=args.aggregate,
                     seed=args.seed, trees_per_class=args.trees_per_class, n_leaves=args.n_leaves,
                     population=args.population, eta=args.eta, tradeoff=args.tradeoff,
                     timing=not args.no_timing)
    rows = run_sweep(spec, args.out, resume=args.resume, jobs=args.jobs, save_dir=args.save_dir)
    summary_path = args.summary or str(Path(args.out).with_suffix("")) + ".summary.csv"
    write_summary(rows, summary_path)
    if args.figure:
        from .plotting import plot_accuracy
        plot_accuracy(rows, args.figure, title=f"{spec.aggregate} accuracy over {spec.repeats} splits")
    sys.stdout.write(Path(summary_path).read_text())
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_accuracy
    with open(args.summary, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "accuracy" not in rows[0]:
        raise ValueError(f"{args.summary}: not a sweep summary CSV")
    plot_accuracy(rows, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> UsageParser:
    p = UsageParser(prog="tropsvm", description="Tropical SVMs for phylogenetic tree classification.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", help="simulate a labeled two-class ultrametric dataset")
    s.add_argument("--n-leaves", type=int, default=5)
    s.add_argument("--population", type=_positive, default=10000.0)
    s.add_argument("--ratio-c", type=_positive, default=10.0, help="species depth / population")
    s.add_argument("--trees-per-class", type=_count, default=100)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="fit a tropical hyperplane and save the model")
    t.add_argument("--data", required=True, help="labeled ultrametric CSV")
    t.add_argument("--strategy", choices=clf.STRATEGIES, default="soft_fixed_assignment")
    t.add_argument("--assignment", help="i_P,j_P,i_Q,j_Q or auto:<case> (case1..case4, case2a/2b)")
    t.add_argument("--ratio-c", type=_positive, help="C for table selection (default: from dataset metadata)")
    t.add_argument("--eta", type=_positive, default=clf.DEFAULT_ETA)
    t.add_argument("--tradeoff", type=_positive, default=1.0)
    t.add_argument("--tol", type=float, default=clf.DEFAULT_TOL, help="sector tie tolerance")
    t.add_argument("--model-out", required=True)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="label each row of an ultrametric CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", help="label file (default: stdout)")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="accuracy and confusion counts on labeled data")
    e.add_argument("--data", required=True)
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--predictions", help="externally produced label file to score")
    e.add_argument("--out", help="also write the report here")
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", help="accuracy over the C grid and test proportions")
    w.add_argument("--c-grid", type=_float_list, default=DEFAULT_C_GRID)
    w.add_argument("--proportions", type=_float_list, default=DEFAULT_PROPORTIONS)
    w.add_argument("--repeats", type=_count, default=10)
    w.add_argument("--strategies", default="alg1,alg2,alg3,alg4",
                   help=f"comma list from {','.join(SWEEP_STRATEGIES)}")
    w.add_argument("--assignment", action="append", metavar="STRATEGY=SPEC",
                   help="per-strategy assignment: i_P,j_P,i_Q,j_Q or auto (default auto)")
    w.add_argument("--aggregate", choices=("best", "mean"), default="best")
    w.add_argument("--trees-per-class", type=_count, default=100)
    w.add_argument("--n-leaves", type=int, default=5)
    w.add_argument("--population", type=_positive, default=10000.0)
    w.add_argument("--eta", type=_positive, default=clf.DEFAULT_ETA)
    w.add_argument("--tradeoff", type=_positive, default=1.0)
    w.add_argument("--seed", type=_seed, default=0)
    w.add_argument("--jobs", type=_count, default=1)
    w.add_argument("--resume", action="store_true", help="skip rows already in --out")
    w.add_argument("--save-dir", help="persist split files and models per cell")
    w.add_argument("--no-timing", action="store_true", help="write 0 wall times (byte-stable output)")
    w.add_argument("--summary", help="summary CSV path (default: <out>.summary.csv)")
    w.add_argument("--figure", help="render an accuracy-vs-C PNG")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="render a sweep summary CSV as a PNG")
    pl.add_argument("--summary", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except clf.NoFeasibleAssignment as exc:
        print(f"tropsvm: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, OSError) as exc:
        print(f"tropsvm: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
