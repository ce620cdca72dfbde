"""Config-driven experiment grids with cell-keyed seeding and resumable output.

A config is an INI file::

    [experiment]
    tasks = surrogate, regression
    functions = sphere, rosenbrock      ; or "all"
    dimension = 4
    sizes = 125, 1000
    kinds = kriging, forest
    repetitions = 10                    ; model seeds per design draw
    draws = 10                          ; draws of each stochastic design
    master_seed = 0

    [design:lhs]
    kind = lhs

    [design:bw]
    kind = gh
    permutations = braaten-weller

Every stochastic input of a cell derives from ``master_seed`` and the cell
coordinates through a stable hash, so results do not depend on scheduling.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .benchfuncs import FUNCTION_IDS, get_function
from .generators import GeneratorConfigError, GeneratorSpec, braaten_weller, first_primes, generate, load_permutations
from .pipelines import run_one_shot, run_regression, run_surrogate_one_shot
from .pointset import scale
from .report import COLUMNS, TASK_METRICS, ResultRecord, record_to_row, row_to_record
from .surrogates import KINDS as SURROGATE_KINDS
from .surrogates import MAX_KRIGING_N

WORKERS_ENV = "ONESHOT_WORKERS"
DEFAULT_SIZES = (125, 1000, 2500, 5000, 10000)
EXIT_OK, EXIT_CELL_FAILURES, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass(frozen=True)
class DesignConfig:
    name: str
    spec: GeneratorSpec

    @property
    def stochastic(self) -> bool:
        return self.spec.stochastic


@dataclass
class ExperimentConfig:
    designs: Tuple[DesignConfig, ...]
    tasks: Tuple[str, ...] = ("opt",)
    functions: Tuple[str, ...] = FUNCTION_IDS
    dimension: int = 4
    sizes: Tuple[int, ...] = DEFAULT_SIZES
    kinds: Tuple[str, ...] = ("kriging",)
    repetitions: int = 10
    draws: int = 10
    master_seed: int = 0
    test_size: int = 10_000
    workers: int = 1

    def digest(self) -> str:
        """Hash of everything that influences results (the worker count does not)."""
        payload = asdict(self)
        payload.pop("workers")
        payload["designs"] = [(d.name, d.spec.describe()) for d in self.designs]
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    def design(self, name: str) -> DesignConfig:
        for d in self.designs:
            if d.name == name:
                return d
        raise KeyError(name)


# --- config parsing --------------------------------------------------------


def _list(section, key, default, cast=str) -> tuple:
    raw = section.get(key)
    if raw is None:
        return tuple(default)
    try:
        return tuple(cast(v.strip()) for v in raw.replace("\n", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"experiment.{key}: {exc}") from None


def _int(section, key, default) -> int:
    try:
        return section.getint(key, default)
    except ValueError:
        raise ConfigError(f"experiment.{key}: expected an integer, got {section.get(key)!r}") from None


def _design(name: str, section, d: int, base: Path) -> DesignConfig:
    where = f"design:{name}"
    kind = section.get("kind")
    if kind is None:
        raise ConfigError(f"{where}.kind is required")
    try:
        if kind == "halton":
            spec = GeneratorSpec("halton", first_primes(d), name=name)
        elif kind in ("gh", "generalized-halton"):
            source = section.get("permutations")
            perm_file = section.get("perm_file")
            if perm_file:
                bases, perms = load_permutations(base / perm_file)
                if len(bases) < d:
                    raise ConfigError(f"{where}.perm_file covers {len(bases)} dimensions, need {d}")
                spec = GeneratorSpec("generalized-halton", bases[:d], perms[:d], name=name)
            elif source == "braaten-weller":
                bw = braaten_weller(d)
                spec = GeneratorSpec(bw.kind, bw.bases, bw.permutations, name=name)
            elif source in (None, "identity"):
                spec = GeneratorSpec("generalized-halton", first_primes(d), name=name)
            else:
                raise ConfigError(f"{where}.permutations: unknown source {source!r}")
        elif kind in ("lhs", "uniform"):
            spec = GeneratorSpec(kind, name=name)
        elif kind == "file":
            path = section.get("path")
            if not path:
                raise ConfigError(f"{where}.path is required for file designs")
            if not (base / path).is_file():
                raise ConfigError(f"{where}.path: no such file {path}")
            spec = GeneratorSpec("file", path=str(base / path), name=name)
        else:
            raise ConfigError(f"{where}.kind: unknown design kind {kind!r}")
        start = section.get("start_index")
        if start is not None:
            spec = GeneratorSpec(spec.kind, spec.bases, spec.permutations, None, int(start),
                                 spec.path, spec.name)
    except (GeneratorConfigError, OSError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return DesignConfig(name, spec)


def parse_config(text: str, base_dir: Optional[Path] = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    ex = parser["experiment"]
    base = base_dir or Path.cwd()

    tasks = _list(ex, "tasks", ("opt",))
    for t in tasks:
        if t not in TASK_METRICS:
            raise ConfigError(f"experiment.tasks: unknown task {t!r}; expected {sorted(TASK_METRICS)}")
    functions = _list(ex, "functions", FUNCTION_IDS)
    if functions == ("all",):
        functions = FUNCTION_IDS
    for f in functions:
        if f not in FUNCTION_IDS:
            raise ConfigError(f"experiment.functions: unknown function {f!r}")
    d = _int(ex, "dimension", 4)
    if not 2 <= d <= 10:
        raise ConfigError("experiment.dimension must lie in 2..10")
    sizes = _list(ex, "sizes", DEFAULT_SIZES, int)
    if not sizes or min(sizes) < 1:
        raise ConfigError("experiment.sizes must be positive integers")
    if set(tasks) - {"opt"} and min(sizes) < 3:
        raise ConfigError("experiment.sizes: surrogate tasks need n >= 3")
    kinds = _list(ex, "kinds", ("kriging",))
    for k in kinds:
        if k not in SURROGATE_KINDS:
            raise ConfigError(f"experiment.kinds: unknown surrogate kind {k!r}")
    cfg = dict(
        tasks=tasks, functions=functions, dimension=d, sizes=tuple(sorted(set(sizes))), kinds=kinds,
        repetitions=_int(ex, "repetitions", 10), draws=_int(ex, "draws", 10),
        master_seed=_int(ex, "master_seed", 0), test_size=_int(ex, "test_size", 10_000),
        workers=_int(ex, "workers", 1),
    )
    for key in ("repetitions", "draws", "test_size", "workers"):
        if cfg[key] < 1:
            raise ConfigError(f"experiment.{key} must be at least 1")
    known = {"tasks", "functions", "dimension", "sizes", "kinds", "repetitions", "draws",
             "master_seed", "test_size", "workers"}
    for key in ex:
        if key not in known:
            raise ConfigError(f"experiment.{key}: unknown field")

    designs = []
    for section in parser.sections():
        if section == "experiment":
            continue
        if not section.startswith("design:") or not section[7:]:
            raise ConfigError(f"unknown section [{section}]")
        designs.append(_design(section[7:], parser[section], d, base))
    if not designs:
        raise ConfigError("no [design:NAME] sections")
    return ExperimentConfig(tuple(designs), **cfg)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


# --- planning --------------------------------------------------------------


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and any JSON-able coordinates."""
    blob = json.dumps([int(master), *parts], separators=(",", ":")).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") >> 1


@dataclass(frozen=True, order=True)
class Cell:
    task: str
    design: str
    fid: str
    n: int
    kind: str
    rep: int
    draw: int = 0
    design_seed: int = 0
    model_seed: int = 0
    test_seed: int = 0
    skip_reason: str = ""

    @property
    def coords(self) -> tuple:
        return (self.task, self.design, self.fid, self.n, self.kind, self.rep)

    @property
    def skipped(self) -> bool:
        return bool(self.skip_reason)


def plan(cfg: ExperimentConfig) -> List[Cell]:
    """Enumerate every cell of the grid in canonical order.

    Stochastic designs get ``draws`` independent draws, deterministic ones a
    single draw; each draw is crossed with ``repetitions`` model seeds. The
    plain optimization task fits no model, so it runs once per draw.
    """
    cells = []
    for task in cfg.tasks:
        kinds = ("none",) if task == "opt" else cfg.kinds
        for dc in cfg.designs:
            draws = cfg.draws if dc.stochastic else 1
            reps = 1 if task == "opt" else cfg.repetitions
            for fid in cfg.functions:
                for n in cfg.sizes:
                    for kind in kinds:
                        for draw in range(draws):
                            dseed = derive_seed(cfg.master_seed, "design", dc.name, n, draw) if dc.stochastic else 0
                            for m in range(reps):
                                rep = draw * reps + m
                                mseed = 0 if task == "opt" else derive_seed(
                                    cfg.master_seed, "model", task, dc.name, fid, n, kind, rep)
                                tseed = derive_seed(cfg.master_seed, "test", fid) if task == "regression" else 0
                                reason = ""
                                if kind == "kriging" and n > MAX_KRIGING_N:
                                    reason = f"kriging limited to n <= {MAX_KRIGING_N}"
                                cells.append(Cell(task, dc.name, fid, n, kind, rep, draw, dseed, mseed, tseed, reason))
    _check_collisions(cells)
    return sorted(cells, key=lambda c: c.coords)


def _check_collisions(cells: Sequence[Cell]) -> None:
    model = [c.model_seed for c in cells if c.task != "opt"]
    if len(set(model)) != len(model):
        raise ConfigError("derived model seeds collide; change master_seed")
    designs = {(c.design, c.n, c.draw): c.design_seed for c in cells if c.design_seed}
    if len(set(designs.values())) != len(designs):
        raise ConfigError("derived design seeds collide; change master_seed")


# --- running one cell ------------------------------------------------------


@lru_cache(maxsize=64)
def _design_points(spec: GeneratorSpec, n: int, d: int, seed: int):
    return generate(spec.with_seed(seed) if spec.stochastic else spec, n, d)


def _records(cell: Cell, cfg: ExperimentConfig, values: Dict[str, float], status: str) -> List[ResultRecord]:
    return [
        ResultRecord(cell.task, cell.design, cell.fid, cell.n, cfg.dimension, cell.kind, cell.rep,
                     metric, values.get(metric, math.nan), cell.design_seed, cell.model_seed,
                     cell.test_seed, __version__, cfg.digest(), status)
        for metric in TASK_METRICS[cell.task]
    ]


def run_cell(cell: Cell, cfg: ExperimentConfig) -> Tuple[List[ResultRecord], str]:
    """Run one cell; returns its records and an error message ('' on success)."""
    if cell.skipped:
        return _records(cell, cfg, {}, "skipped"), ""
    try:
        f = get_function(cell.fid, cfg.dimension)
        spec = cfg.design(cell.design).spec
        ps = scale(_design_points(spec, cell.n, cfg.dimension, cell.design_seed), f.domain)
        if cell.task == "opt":
            out = run_one_shot(ps, f, cell.rep)
            values = {"regret": out.regret}
            status = "ok"
        elif cell.task == "surrogate":
            out = run_surrogate_one_shot(ps, f, cell.kind, cell.model_seed, repetition=cell.rep)
            values = {"regret": out.regret, "regret_hat": out.regret_hat, "improved": float(out.improved)}
            status = "degraded" if out.degraded else "ok"
        else:
            out = run_regression(ps, f, cell.kind, cell.model_seed, cell.test_seed, cfg.test_size,
                                 repetition=cell.rep)
            values = {"mse": out.mse}
            status = "missing" if out.missing else "ok"
    except Exception as exc:  # a failing cell must not stop the grid
        return _records(cell, cfg, {}, "failed"), f"{type(exc).__name__}: {exc}"
    return _records(cell, cfg, values, status), ""


# --- execution -------------------------------------------------------------


@dataclass
class ExecutionSummary:
    planned: int
    ran: int = 0
    reused: int = 0
    failed: int = 0
    skipped: int = 0
    interrupted: bool = False
    errors: List[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_CELL_FAILURES if self.failed else EXIT_OK


def resolve_workers(cfg: ExperimentConfig, workers: Optional[int] = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return cfg.workers


def _read_existing(path: Path) -> List[ResultRecord]:
    """Rows of a previous (possibly interrupted) run; a torn last line is dropped."""
    if not path.exists():
        return []
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != COLUMNS:
            return []
        for row in reader:
            try:
                records.append(row_to_record(row))
            except (KeyError, TypeError, ValueError):
                continue
    return records


def _reusable(cells: Sequence[Cell], existing: Sequence[ResultRecord], cfg: ExperimentConfig) -> Dict[tuple, list]:
    by_coords = {}
    for r in existing:
        by_coords.setdefault((r.task, r.design, r.fid, r.n, r.kind, r.rep), []).append(r)
    digest = cfg.digest()
    done = {}
    for cell in cells:
        rows = by_coords.get(cell.coords, [])
        want = TASK_METRICS[cell.task]
        if sorted(r.metric for r in rows) != sorted(want):
            continue
        if any(
            r.toolkit_version != __version__ or r.config_digest != digest or r.status == "failed"
            or (r.design_seed, r.model_seed, r.test_seed) != (cell.design_seed, cell.model_seed, cell.test_seed)
            for r in rows
        ):
            continue
        done[cell.coords] = sorted(rows, key=lambda r: r.metric)
    return done


def _serialize(records: Sequence[ResultRecord], header: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(COLUMNS)
    for r in records:
        w.writerow(record_to_row(r))
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _sort_key(r: ResultRecord) -> tuple:
    return r.key()


def execute(cfg: ExperimentConfig, out, workers: Optional[int] = None,
            stop_after: Optional[int] = None, log=None) -> ExecutionSummary:
    """Run every missing cell of ``plan(cfg)`` and leave a sorted CSV at ``out``.

    Completed cells are appended as they finish so an interrupted run loses
    at most the cells in flight. ``stop_after`` ends the run after that many
    fresh cells without the final sort, which simulates an interruption.
    """
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cells = plan(cfg)
    summary = ExecutionSummary(len(cells))
    done = _reusable(cells, _read_existing(out), cfg)
    summary.reused = len(done)
    todo = [c for c in cells if c.coords not in done]
    results = {k: v for k, v in done.items()}
    _atomic_write(out, _serialize(sorted((r for rs in done.values() for r in rs), key=_sort_key), header=True))

    def finish(cell, records, error, sink):
        results[cell.coords] = records
        sink.write(_serialize(records))
        sink.flush()
        os.fsync(sink.fileno())
        summary.ran += 1
        if cell.skipped:
            summary.skipped += 1
        if error:
            summary.failed += 1
            summary.errors.append(f"{cell.coords}: {error}")
            if log:
                print(f"cell {cell.coords} failed: {error}", file=log)

    n_workers = resolve_workers(cfg, workers)
    with open(out, "a", newline="") as sink:
        if n_workers == 1:
            for cell in todo:
                if stop_after is not None and summary.ran >= stop_after:
                    summary.interrupted = True
                    break
                finish(cell, *run_cell(cell, cfg), sink)
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                pending = {}
                queue = list(todo)
                while queue or pending:
                    while queue and len(pending) < 2 * n_workers:
                        cell = queue.pop(0)
                        pending[pool.submit(run_cell, cell, cfg)] = cell
                    finished, _ = wait(pending, return_when=FIRST_COMPLETED)
                    for fut in finished:
                        cell = pending.pop(fut)
                        if stop_after is not None and summary.ran >= stop_after:
                            continue
                        finish(cell, *fut.result(), sink)
                    if stop_after is not None and summary.ran >= stop_after:
                        summary.interrupted = bool(queue or pending)
                        for fut in pending:
                            fut.cancel()
                        break
    if summary.interrupted:
        return summary
    ordered = sorted((r for rs in results.values() for r in rs), key=_sort_key)
    _atomic_write(out, _serialize(ordered, header=True))
    return summary


def describe_plan(cells: Sequence[Cell], stream=None) -> None:
    stream = stream or sys.stdout
    runnable = [c for c in cells if not c.skipped]
    print(f"{len(cells)} cells, {len(runnable)} runnable, {len(cells) - len(runnable)} skipped", file=stream)
    groups: Dict[tuple, int] = {}
    for c in cells:
        key = (c.task, c.design, c.kind, c.n, c.skip_reason)
        groups[key] = groups.get(key, 0) + 1
    for (task, design, kind, n, reason), count in sorted(groups.items()):
        note = f"  skipped: {reason}" if reason else ""
        print(f"  {task:<10} {design:<16} {kind:<8} n={n:<6} cells={count}{note}", file=stream)
