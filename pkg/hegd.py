###
# Copyright (c) 1999-2025, Juniper Networks Inc.
#
#  All rights reserved.
#
#  License: Apache 2.0
#
#  THIS SOFTWARE IS PROVIDED BY Juniper Networks Inc. ''AS IS'' AND ANY
#  EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE IMPLIED
#  WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE ARE
#  DISCLAIMED. IN NO EVENT SHALL Juniper Networks Inc. BE LIABLE FOR ANY
#  DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL DAMAGES
#  (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR SERVICES;
#  LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER CAUSED AND
#  ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY, OR TORT
#  (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE OF THIS
#  SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.
###

from __future__ import annotations as _annotations

import argparse
import csv
import io
import json
import logging
import signal
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict

import anyio
import numpy as np
import yaml
from pydantic import BaseModel, Field, model_validator

import hegd_key_manager
from utils.ckks import KeySet, keygen
from utils.config import BUILTIN_PRESETS, get_workers_with_fallback, resolve_preset
from utils.errors import ContractViolation, DepthExhausted, HeError
from utils.probgen import EigenProfile, GenSpec, demo_instance, derive_seed, instance_from_json, make_instance
from utils.solver import Algorithm, Backend, QpInstance, SolverConfig, max_iterations, solve

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
log = logging.getLogger('hegd')

EXIT_OK = 0
EXIT_CONTRACT = 2
EXIT_DEPTH = 3
EXIT_IO = 4

REPORT_COLUMNS = ['d', 'kappa', 'algorithm', 'iterations', 'backend',
                  'median_tol', 'q1_tol', 'q3_tol', 'winner', 'seed']
SAMPLE_COLUMNS = ['d', 'kappa', 'algorithm', 'repetition', 'tolerance']

KEYGEN_STREAM = 0x6B6579
ENCRYPT_STREAM = 0x656E63


# ============================================================================
# Sweep configuration and results
# ============================================================================

class SweepSpec(BaseModel):
    """Benchmark sweep over dimensions and condition numbers"""
    dims: list[int] = Field(default_factory=lambda: [2, 4, 8])
    kappas: list[float] = Field(default_factory=lambda: [1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0])
    repetitions: int = Field(default=100, ge=1)
    backend: Backend = Backend.PLAIN_EXACT
    gd_iterations: int = Field(default=9, ge=0)
    agd_iterations: int = Field(default=6, ge=0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    depth_budget: int = Field(default=18, ge=0)
    eigen_profile: EigenProfile = EigenProfile.TWO_POINT
    ckks_preset: str = "insecure-test"
    workers: int | None = Field(default=None, ge=1)

    @model_validator(mode='after')
    def check_depth_budget(self) -> SweepSpec:
        # DepthExhausted is not a ValueError, so pydantic lets it through unwrapped
        for algorithm, iterations in self.iterations.items():
            limit = max_iterations(algorithm, self.depth_budget)
            if iterations > limit:
                raise DepthExhausted(
                    f"{algorithm.value.upper()} with {iterations} iterations exceeds the depth budget "
                    f"{self.depth_budget} (max {limit})"
                )
        if any(d < 2 for d in self.dims):
            raise ValueError(f"Every dimension must be at least 2, got {self.dims}")
        if any(not k >= 1 for k in self.kappas):
            raise ValueError(f"Every condition number must be >= 1, got {self.kappas}")
        return self

    @property
    def iterations(self) -> Dict[Algorithm, int]:
        return {Algorithm.GD: self.gd_iterations, Algorithm.AGD: self.agd_iterations}

    @classmethod
    def for_ci(cls, backend: Backend = Backend.PLAIN_EXACT, **overrides) -> SweepSpec:
        """Reduced sweep that finishes quickly on a laptop"""
        if Backend(backend) is Backend.CKKS:
            defaults = dict(dims=[2, 4], kappas=[2.0, 10.0], repetitions=2)
        else:
            defaults = dict(repetitions=20)
        return cls(backend=backend, **{**defaults, **overrides})


class SweepRow(BaseModel):
    d: int
    kappa: float
    algorithm: Algorithm
    iterations: int
    backend: Backend
    median_tol: float
    q1_tol: float
    q3_tol: float
    winner: bool
    seed: int


class SampleRow(BaseModel):
    d: int
    kappa: float
    algorithm: Algorithm
    repetition: int
    tolerance: float


class SweepReport(BaseModel):
    rows: list[SweepRow] = Field(default_factory=list)
    metadata: Dict[str, Any] = Field(default_factory=dict)
    samples: list[SampleRow] = Field(default_factory=list)

    def row(self, d: int, kappa: float, algorithm: Algorithm) -> SweepRow:
        for r in self.rows:
            if r.d == d and r.kappa == kappa and r.algorithm is Algorithm(algorithm):
                return r
        raise KeyError(f"No row for d={d}, kappa={kappa}, algorithm={Algorithm(algorithm).value}")


@dataclass
class TrajectoryRow:
    repetition: int
    t: int
    x: list[float]
    distance: float
    tolerance: float | None
    level: int | None


@dataclass
class TrajectoryDataset:
    d: int
    kappa: float
    algorithm: Algorithm
    backend: Backend
    iterations: int
    rows: list[TrajectoryRow] = field(default_factory=list)

    def median_distances(self) -> np.ndarray:
        """Median distance to x* at each iteration, across repetitions"""
        by_t: list[list[float]] = [[] for _ in range(self.iterations + 1)]
        for row in self.rows:
            by_t[row.t].append(row.distance)
        return np.array([np.median(values) for values in by_t])


# ============================================================================
# Work items
# ============================================================================

def _instance_for(d: int, kappa: float, seed: int, repetition: int, eigen_profile: EigenProfile,
                  demo: bool = False) -> QpInstance:
    item_seed = derive_seed(seed, d, kappa, repetition)
    if demo:
        return demo_instance(item_seed)
    return make_instance(GenSpec(d=d, kappa=kappa, seed=item_seed, eigen_profile=eigen_profile),
                         instance_id=f"d{d}-k{kappa:g}-r{repetition}")


def _encryption_rng(seed: int, d: int, kappa: float, repetition: int) -> np.random.Generator:
    return np.random.default_rng([derive_seed(seed, d, kappa, repetition), ENCRYPT_STREAM])


def _keys_for_dimension(d: int, preset_name: str, seed: int) -> KeySet:
    preset = resolve_preset(preset_name)
    log.info(f"Generating {preset_name} keys for d={d} (rotation limit {d * d})")
    return keygen(preset.to_params(), np.random.default_rng([seed, d, KEYGEN_STREAM]), rotation_limit=d * d)


def _run_repetition(spec: SweepSpec, d: int, kappa: float, repetition: int,
                    keys: KeySet | None) -> Dict[Algorithm, float]:
    """Final tolerance of GD and AGD on one generated instance"""
    try:
        inst = _instance_for(d, kappa, spec.seed, repetition, spec.eigen_profile)
        tolerances = {}
        for algorithm, iterations in spec.iterations.items():
            config = SolverConfig(iterations, spec.backend, spec.depth_budget, record_trajectory=False)
            rng = _encryption_rng(spec.seed, d, kappa, repetition)
            trace = solve(inst, algorithm, config, keys=keys, rng=rng)
            tolerances[algorithm] = trace.final_tolerance
        return tolerances
    except HeError as e:
        raise type(e)(f"cell d={d} kappa={kappa:g} repetition={repetition}: {e}") from e


async def _run_items(spec: SweepSpec, items: list[tuple[int, float, int]],
                     keys_by_dim: Dict[int, KeySet]) -> Dict[tuple[int, float, int], Dict[Algorithm, float]]:
    workers = get_workers_with_fallback(spec.workers)
    limiter = anyio.CapacityLimiter(workers)
    results: Dict[tuple[int, float, int], Dict[Algorithm, float]] = {}
    failures: Dict[tuple[int, float, int], Exception] = {}

    async def run_item(item: tuple[int, float, int]) -> None:
        d, kappa, repetition = item
        try:
            # Solves are CPU-bound numpy code; threads keep the event loop free
            # while the limiter caps how many run at once
            results[item] = await anyio.to_thread.run_sync(
                _run_repetition, spec, d, kappa, repetition, keys_by_dim.get(d), limiter=limiter
            )
        except Exception as e:
            failures[item] = e

    log.info(f"Running {len(items)} work item(s) on {workers} worker(s)")
    async with anyio.create_task_group() as tg:
        for item in items:
            tg.start_soon(run_item, item)

    if failures:
        # Report the first failing item in sweep order so reruns fail identically
        first = min(failures, key=items.index)
        raise failures[first]
    return results


def run_sweep(spec: SweepSpec) -> SweepReport:
    """Evaluate GD and AGD over every (d, kappa) cell of the sweep

    Each repetition draws its own instance from a seed derived from
    (seed, d, kappa, repetition), so the report is independent of the
    worker count and scheduling order.

    Raises:
        DepthExhausted: an iteration count does not fit the depth budget
        ContractViolation: invalid cell parameters
    """
    start = time.time()
    keys_by_dim: Dict[int, KeySet] = {}
    if spec.backend is Backend.CKKS:
        keys_by_dim = {d: _keys_for_dimension(d, spec.ckks_preset, spec.seed) for d in spec.dims}

    items = [(d, kappa, r) for d in spec.dims for kappa in spec.kappas for r in range(spec.repetitions)]
    results = anyio.run(_run_items, spec, items, keys_by_dim)

    report = SweepReport(metadata={
        "backend": spec.backend.value,
        "eigen_profile": spec.eigen_profile.value,
        "eigenvalues": "lambda_min = 1, lambda_max = kappa" if spec.eigen_profile is EigenProfile.UNIFORM_SPREAD
        else "half at lambda_min = 1, half at lambda_max = kappa",
        "x_star": "uniform in [-1, 1]^d",
        "x0": "x_star plus a unit vector with energy 1/d along each eigenvector, random signs",
        "repetitions": spec.repetitions,
        "depth_budget": spec.depth_budget,
        "seed": spec.seed,
        "ckks_preset": spec.ckks_preset if spec.backend is Backend.CKKS else None,
    })
    for d in spec.dims:
        for kappa in spec.kappas:
            tolerances = {
                algorithm: np.array([results[(d, kappa, r)][algorithm] for r in range(spec.repetitions)])
                for algorithm in spec.iterations
            }
            medians = {algorithm: float(np.median(values)) for algorithm, values in tolerances.items()}
            # Ties go to GD
            winner = Algorithm.GD if medians[Algorithm.GD] <= medians[Algorithm.AGD] else Algorithm.AGD
            for algorithm, values in tolerances.items():
                q1, q3 = np.percentile(values, [25, 75])
                report.rows.append(SweepRow(
                    d=d, kappa=kappa, algorithm=algorithm, iterations=spec.iterations[algorithm],
                    backend=spec.backend, median_tol=medians[algorithm], q1_tol=float(q1), q3_tol=float(q3),
                    winner=algorithm is winner, seed=spec.seed,
                ))
                report.samples.extend(
                    SampleRow(d=d, kappa=kappa, algorithm=algorithm, repetition=r, tolerance=float(v))
                    for r, v in enumerate(values)
                )
            log.info(f"d={d} kappa={kappa:g}: GD {medians[Algorithm.GD]:.3e}, "
                     f"AGD {medians[Algorithm.AGD]:.3e} -> {winner.value.upper()}")

    log.info(f"Sweep finished in {time.time() - start:.1f}s")
    return report


def run_trajectory(d: int, kappa: float, repetitions: int, N: int, backend: Backend,
                   seed: int = 0, algorithm: Algorithm = Algorithm.AGD, demo: bool = False,
                   keys: KeySet | None = None, depth_budget: int = 18,
                   eigen_profile: EigenProfile = EigenProfile.TWO_POINT) -> TrajectoryDataset:
    """Per-iteration iterates and distances to x* for repeated solves

    With ``demo`` every repetition solves the 2x2, kappa = 2 instance started
    at (3, 3) with x* = (1, 1); only Q changes between repetitions.

    Raises:
        DepthExhausted: N iterations do not fit ``depth_budget``
    """
    algorithm = Algorithm(algorithm)
    backend = Backend(backend)
    if demo and (d, kappa) != (2, 2.0):
        raise ContractViolation(f"The demo preset is fixed at d=2, kappa=2; got d={d}, kappa={kappa}")
    limit = max_iterations(algorithm, depth_budget)
    if N > limit:
        raise DepthExhausted(f"{algorithm.value.upper()} with {N} iterations exceeds the depth budget "
                             f"{depth_budget} (max {limit})")
    if backend is Backend.CKKS and keys is None:
        keys = _keys_for_dimension(d, "insecure-test", seed)

    dataset = TrajectoryDataset(d, kappa, algorithm, backend, N)
    config = SolverConfig(N, backend, depth_budget)
    for repetition in range(repetitions):
        inst = _instance_for(d, kappa, seed, repetition, eigen_profile, demo=demo)
        trace = solve(inst, algorithm, config, keys=keys, rng=_encryption_rng(seed, d, kappa, repetition))
        distances = trace.distances(inst.x_star)
        for t, x in enumerate(trace.iterates):
            dataset.rows.append(TrajectoryRow(
                repetition=repetition,
                t=t,
                x=[float(v) for v in x],
                distance=float(distances[t]),
                tolerance=trace.tolerances[t] if t < len(trace.tolerances) else None,
                level=trace.levels[t],
            ))
    return dataset


# ============================================================================
# Report files
# ============================================================================

def _csv_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Algorithm | Backend):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


def _write_csv(path: str | Path, columns: list[str], records: list[Dict[str, Any]]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for record in records:
        writer.writerow([_csv_value(record[c]) for c in columns])
    Path(path).write_text(buffer.getvalue(), encoding="utf-8")


def emit(report: SweepReport, fmt: str, path: str | Path) -> None:
    """Write the report as CSV (one row per (d, kappa, algorithm)) or JSON

    Raises:
        ContractViolation: unknown format
        OSError: the file cannot be written
    """
    fmt = fmt.lower()
    if fmt == "csv":
        _write_csv(path, REPORT_COLUMNS, [dict(r) for r in report.rows])
    elif fmt == "json":
        Path(path).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    else:
        raise ContractViolation(f"Unknown report format '{fmt}'. Expected csv or json")
    log.info(f"Wrote {len(report.rows)} row(s) to {path}")


def emit_samples(report: SweepReport, path: str | Path) -> None:
    """Per-repetition tolerances, for box plots"""
    _write_csv(path, SAMPLE_COLUMNS, [dict(s) for s in report.samples])


def emit_trajectory(dataset: TrajectoryDataset, path: str | Path) -> None:
    x_columns = [f"x_{i}" for i in range(dataset.d)]
    columns = ['repetition', 't', *x_columns, 'distance', 'tolerance', 'level']
    records = []
    for row in dataset.rows:
        record = {'repetition': row.repetition, 't': row.t, 'distance': row.distance,
                  'tolerance': row.tolerance, 'level': row.level}
        record.update(zip(x_columns, row.x))
        records.append(record)
    _write_csv(path, columns, records)


def parse_report(path: str | Path) -> SweepReport:
    """Read a report written by ``emit``; the format follows the file suffix"""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return SweepReport.model_validate_json(text)

    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is not None and reader.fieldnames != REPORT_COLUMNS:
        raise ContractViolation(f"Unexpected report columns {reader.fieldnames}. Expected {REPORT_COLUMNS}")
    rows = []
    for record in reader:
        record['winner'] = record['winner'] == 'true'
        rows.append(SweepRow.model_validate(record))
    return SweepReport(rows=rows)


# ============================================================================
# Command handlers
# ============================================================================

def _load_spec_file(path: str) -> Dict[str, Any]:
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) if path.endswith(('.yaml', '.yml')) else json.loads(text)
    if not isinstance(data, dict):
        raise ContractViolation(f"File {path} must contain a mapping")
    return data


def handle_keygen(args: argparse.Namespace) -> None:
    out = Path(args.out)
    preset = resolve_preset(args.preset)
    keys = hegd_key_manager.generate_keys(preset, args.seed, args.rotation_limit)
    hegd_key_manager.save_key_set(keys, out.name, args.preset, args.rotation_limit, root=out.parent)
    print(f"Wrote {args.preset} keys (N={preset.n}, depth={preset.depth}, "
          f"{len(keys.galois.steps)} rotation keys) to {out}")


def handle_solve(args: argparse.Namespace) -> None:
    try:
        inst = instance_from_json(_load_spec_file(args.instance))
    except json.JSONDecodeError as e:
        raise ContractViolation(f"File {args.instance} is not a valid JSON file: {e}") from e
    inst.validate()

    algorithm = Algorithm(args.algo)
    backend = Backend(args.backend)
    iterations = args.iters if args.iters is not None else max_iterations(algorithm, args.depth_budget)
    keys = None
    if backend is Backend.CKKS:
        if args.keys:
            key_dir = Path(args.keys)
            keys = hegd_key_manager.load_key_set(key_dir.name, key_dir.parent)
        else:
            keys = _keys_for_dimension(inst.d, args.preset, args.seed)

    config = SolverConfig(iterations, backend, args.depth_budget)
    trace = solve(inst, algorithm, config, keys=keys, rng=np.random.default_rng([args.seed, ENCRYPT_STREAM]))
    document = json.dumps(trace.to_json(inst.instance_id), indent=2)
    if args.trace:
        Path(args.trace).write_text(document + "\n", encoding="utf-8")
        log.info(f"Wrote trace to {args.trace}")
    else:
        print(document)
    log.info(f"{algorithm.value.upper()} final tolerance {trace.final_tolerance:.3e}")


def handle_bench(args: argparse.Namespace) -> None:
    fields = _load_spec_file(args.config) if args.config else {}
    overrides = {
        'dims': args.dims, 'kappas': args.kappas, 'repetitions': args.reps, 'backend': args.backend,
        'seed': args.seed, 'workers': args.workers, 'gd_iterations': args.gd_iters,
        'agd_iterations': args.agd_iters, 'eigen_profile': args.eigen_profile, 'ckks_preset': args.preset,
    }
    fields.update({k: v for k, v in overrides.items() if v is not None})
    spec = SweepSpec.for_ci(**fields) if args.ci else SweepSpec(**fields)

    report = run_sweep(spec)
    fmt = args.format or ("json" if str(args.out).endswith(".json") else "csv")
    emit(report, fmt, args.out)
    if args.samples:
        emit_samples(report, args.samples)


def handle_trace(args: argparse.Namespace) -> None:
    d, kappa = (2, 2.0) if args.demo else (args.d, args.kappa)
    dataset = run_trajectory(d, kappa, args.reps, args.iters, Backend(args.backend), seed=args.seed,
                             algorithm=Algorithm(args.algo), demo=args.demo)
    emit_trajectory(dataset, args.out)
    medians = dataset.median_distances()
    log.info(f"Median distance to x*: {medians[0]:.3e} -> {medians[-1]:.3e} after {dataset.iterations} iterations")


# Command registry mapping subcommand names to their handler functions
COMMAND_HANDLERS: Dict[str, Callable[[argparse.Namespace], None]] = {
    "keygen": handle_keygen,
    "solve": handle_solve,
    "bench": handle_bench,
    "trace": handle_trace,
}


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Encrypted gradient descent for quadratic programs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  %(prog)s keygen --preset insecure-test --out keys/d4 --rotation-limit 16
  %(prog)s solve --instance qp.json --algo agd --iters 6 --backend ckks --keys keys/d4
  %(prog)s bench --backend plain --reps 100 --out report.csv --samples samples.csv
  %(prog)s bench --ci --backend ckks --out ci.json
  %(prog)s trace --fig2 --reps 100 --iters 6 --out trajectory.csv

Built-in presets: {', '.join(BUILTIN_PRESETS)}
        """
    )
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Logging verbosity')
    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    keygen_parser = subparsers.add_parser('keygen', help='Generate and save a key set')
    keygen_parser.add_argument('--preset', default='insecure-test', help='Preset name or JSON/YAML preset file')
    keygen_parser.add_argument('--out', required=True, help='Output key directory')
    keygen_parser.add_argument('--rotation-limit', type=int, default=None, help='Rotation keys only below this step')
    keygen_parser.add_argument('--seed', type=int, default=None, help='Deterministic seed (testing only)')

    solve_parser = subparsers.add_parser('solve', help='Solve one QP instance')
    solve_parser.add_argument('--instance', required=True, help='Instance JSON file')
    solve_parser.add_argument('--algo', choices=[a.value for a in Algorithm], default='agd')
    solve_parser.add_argument('--iters', type=int, default=None, help='Iterations (default: most that fit)')
    solve_parser.add_argument('--backend', choices=[b.value for b in Backend], default='plain')
    solve_parser.add_argument('--keys', default=None, help='Key directory from keygen (ckks backend)')
    solve_parser.add_argument('--preset', default='insecure-test', help='Preset for on-the-fly keys')
    solve_parser.add_argument('--depth-budget', type=int, default=18)
    solve_parser.add_argument('--seed', type=int, default=0)
    solve_parser.add_argument('--trace', default=None, help='Write the trace JSON here instead of stdout')

    bench_parser = subparsers.add_parser('bench', help='Run the GD vs AGD sweep')
    bench_parser.add_argument('--config', default=None, help='Sweep JSON/YAML file')
    bench_parser.add_argument('--dims', type=_int_list, default=None, help='Comma separated, e.g. 2,4,8')
    bench_parser.add_argument('--kappas', type=_float_list, default=None, help='Comma separated, e.g. 1.5,2,10')
    bench_parser.add_argument('--reps', type=int, default=None)
    bench_parser.add_argument('--backend', choices=[b.value for b in Backend], default=None)
    bench_parser.add_argument('--gd-iters', type=int, default=None)
    bench_parser.add_argument('--agd-iters', type=int, default=None)
    bench_parser.add_argument('--eigen-profile', choices=[p.value for p in EigenProfile], default=None)
    bench_parser.add_argument('--preset', default=None, help='CKKS preset for the ckks backend')
    bench_parser.add_argument('--seed', type=int, default=None)
    bench_parser.add_argument('--workers', type=int, default=None, help='Worker threads (default: HEGD_WORKERS or CPU count)')
    bench_parser.add_argument('--ci', action='store_true', help='Reduced sweep for CI')
    bench_parser.add_argument('--out', required=True, help='Report path (.csv or .json)')
    bench_parser.add_argument('--format', choices=['csv', 'json'], default=None)
    bench_parser.add_argument('--samples', default=None, help='Per-repetition tolerance CSV')

    trace_parser = subparsers.add_parser('trace', help='Record per-iteration trajectories')
    trace_parser.add_argument('--fig2', '--demo', dest='demo', action='store_true',
                              help='2x2, kappa=2 instance from (3, 3)')
    trace_parser.add_argument('--d', type=int, default=2)
    trace_parser.add_argument('--kappa', type=float, default=2.0)
    trace_parser.add_argument('--reps', type=int, default=100)
    trace_parser.add_argument('--iters', type=int, default=6)
    trace_parser.add_argument('--algo', choices=[a.value for a in Algorithm], default='agd')
    trace_parser.add_argument('--backend', choices=[b.value for b in Backend], default='plain')
    trace_parser.add_argument('--seed', type=int, default=0)
    trace_parser.add_argument('--out', required=True, help='Trajectory CSV path')
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.getLogger().setLevel(args.log_level)

    handler = COMMAND_HANDLERS.get(args.command)
    if handler is None:
        parser.print_help()
        return EXIT_CONTRACT

    def signal_handler(sig, frame):
        print("\nInterrupted, partial results discarded")
        sys.exit(130)

    signal.signal(signal.SIGINT, signal_handler)

    try:
        handler(args)
    except DepthExhausted as e:
        log.error(f"Depth budget exhausted: {e}")
        return EXIT_DEPTH
    except (ContractViolation, ValueError) as e:
        log.error(f"Invalid input: {e}")
        return EXIT_CONTRACT
    except OSError as e:
        log.error(f"I/O error: {e}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
