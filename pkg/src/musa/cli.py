"""``musa`` command line: generate, reduce, fidelity, simulate.

Every command is deterministic for a given ``--seed`` (default: ``$MUSA_SEED``
or 0).  Outputs are written to a temporary file and moved into place only on
success, so a failed run never leaves a half-written CSV behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .components import SensorWindow, Technique
from .configfile import read_key_values
from .datagen import (
    DEFAULT_DOF,
    DEFAULT_SKEW_ALPHA,
    Family,
    generate_window,
    load_reference,
    standard_sizes,
    synthetic_reference,
)
from .errors import MusaError, ParseError
from .experiments import FIDELITY_HEADER, FidelityPlan, run_fidelity, summarize
from .netsim import (
    DEFAULT_SWEEPS,
    SWEEP_HEADER,
    Axis,
    Reduction,
    SimConfig,
    SweepRow,
    mean_ci,
    sweep_reports,
)
from .sampler import Level, musa_reduce, reduction_level

log = logging.getLogger("musa")


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def read_window_csv(path: str | Path) -> SensorWindow:
    """Parse a numeric CSV with a mandatory header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV; a header row is required", line=1) from None
        header = [h.strip() for h in header]
        if not header or any(h == "" for h in header):
            raise ParseError("header row has empty column names", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
            values = []
            for j, cell in enumerate(row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"non-numeric value {cell!r} in column {header[j]!r}", line=lineno, column=header[j]
                    ) from None
            rows.append(values)
    if len(rows) < 2:
        raise ParseError(f"need at least two data rows, found {len(rows)}")
    arr = np.array(rows)
    if not np.isfinite(arr).all():
        raise ParseError("CSV contains NaN or infinite values")
    return SensorWindow(arr, tuple(header))


def window_to_csv(window: SensorWindow) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = window.column_names or tuple(f"x{j + 1}" for j in range(window.p))
    writer.writerow(names)
    for row in window.values:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def rows_to_csv(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def default_seed() -> int:
    raw = os.environ.get("MUSA_SEED")
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"MUSA_SEED must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in str(text).replace(";", ",").split(",") if v.strip()]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    if args.reference:
        ref = load_reference(args.reference)
    else:
        ref = synthetic_reference(p=args.p, seed=args.reference_seed)
    spec = ref.spec(args.family, seed=args.seed, skew_alpha=args.skew_alpha, dof=args.dof)
    window = generate_window(spec, args.n)
    names = tuple(f"x{j + 1}" for j in range(window.p))
    atomic_write(args.output, window_to_csv(SensorWindow(window.values, names)))
    return 0


def cmd_reduce(args: argparse.Namespace) -> int:
    window = read_window_csv(args.input)
    n_prime = args.n_prime if args.n_prime is not None else reduction_level(window.n, args.level)
    kwargs = {}
    technique = Technique.parse(args.technique)
    if technique is Technique.PCA:
        kwargs["standardize"] = args.standardize
    elif technique is Technique.ICA:
        kwargs["seed"] = args.seed
    result = musa_reduce(window, n_prime, technique, final_sort=not args.no_final_sort, **kwargs)
    sidecar = Path(str(args.output) + ".indices")
    indices = ",".join(str(int(i)) for i in result.retained_indices)
    atomic_write(args.output, window_to_csv(result.reduced))
    atomic_write(sidecar, f"retained_indices={indices}\n")
    return 0


def cmd_fidelity(args: argparse.Namespace) -> int:
    ref = load_reference(args.reference) if args.reference else synthetic_reference(p=args.p, seed=args.reference_seed)
    sizes = standard_sizes() if args.full_grid else _int_list(args.sizes)
    plan = FidelityPlan(
        families=[Family.parse(f) for f in _str_list(args.distributions)],
        sizes=sizes,
        techniques=[Technique.parse(t) for t in _str_list(args.techniques)],
        levels=[Level.parse(lv) for lv in _str_list(args.levels)],
        replications=args.replications,
        base_seed=args.seed,
        reference=ref,
        strict_ica=args.strict_ica,
        jobs=args.jobs,
    )
    rows = summarize(run_fidelity(plan))
    atomic_write(args.output, rows_to_csv(FIDELITY_HEADER, (r.as_csv() for r in rows)))
    return 0


def _sim_config(args: argparse.Namespace) -> SimConfig:
    values = {}
    for f in fields(SimConfig):
        if f.name == "seed":
            continue
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return SimConfig(seed=args.seed, **values)


def cmd_simulate(args: argparse.Namespace) -> int:
    base = _sim_config(args)
    axes = list(Axis) if args.axis in (None, "all") else [Axis.parse(a) for a in _str_list(args.axis)]
    reductions = [Reduction.parse(r) for r in _str_list(args.reductions)]
    outputs: dict[Axis, str] = {}
    for axis in axes:
        values = _int_list(args.values) if args.values else list(DEFAULT_SWEEPS[axis])
        reports = sweep_reports(base, axis, values, reductions, args.replications, record_events=bool(args.event_log))
        rows = []
        for (value, reduction), reps in reports.items():
            e_mean, e_ci = mean_ci([r.total_energy_J for r in reps])
            d_mean, d_ci = mean_ci([r.mean_delay_s for r in reps])
            rows.append(
                SweepRow(
                    value, reduction, e_mean, e_ci, d_mean, d_ci,
                    sum(r.packets_generated for r in reps), sum(r.packets_delivered for r in reps),
                ).as_csv()
            )
            if args.event_log:
                for rep_index, rep in enumerate(reps):
                    name = f"events_{axis.value}_{value}_{reduction.value}_seed{base.seed + rep_index}.csv"
                    atomic_write(
                        Path(args.event_log) / name,
                        rows_to_csv(
                            ("time_s", "sender", "receiver", "bits", "tx_energy_J", "rx_energy_J"),
                            ([repr(e.time_s), str(e.sender), str(e.receiver), str(e.bits),
                              repr(e.tx_energy_J), repr(e.rx_energy_J)] for e in rep.events or []),
                        ),
                    )
        outputs[axis] = rows_to_csv(SWEEP_HEADER, rows)
    out = Path(args.output)
    if len(axes) == 1 and out.suffix == ".csv":
        atomic_write(out, outputs[axes[0]])
    else:
        for axis, text in outputs.items():
            atomic_write(out / f"{axis.value}.csv", text)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' file; keys are this command's option names")
    p.add_argument("--seed", type=int, default=None, help="base RNG seed (default $MUSA_SEED or 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="musa", description="Multivariate rank-and-trim sampling for sensor data.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a pseudo-real window to CSV")
    _add_common(g)
    g.add_argument("--family", default="gaussian", choices=[f.value for f in Family])
    g.add_argument("--n", type=int, default=720)
    g.add_argument("--reference", help="reference moments file (p, means, covariance rows)")
    g.add_argument("--p", type=int, default=19, help="dimension of the synthetic reference")
    g.add_argument("--reference-seed", type=int, default=0)
    g.add_argument("--skew-alpha", type=float, default=DEFAULT_SKEW_ALPHA)
    g.add_argument("--dof", type=float, default=DEFAULT_DOF)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reduce", help="reduce a CSV window")
    _add_common(r)
    r.add_argument("input")
    size = r.add_mutually_exclusive_group(required=True)
    size.add_argument("--n-prime", type=int)
    size.add_argument("--level", choices=[lv.value for lv in Level])
    r.add_argument("--technique", default="pca", choices=[t.value for t in Technique])
    r.add_argument("--standardize", action="store_true", help="correlation-matrix PCA")
    r.add_argument("--no-final-sort", action="store_true", help="emit rows in rank order")
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_reduce)

    f = sub.add_parser("fidelity", help="replicated R_ERROR / ANOVA experiment")
    _add_common(f)
    f.add_argument("--distributions", default="gaussian,skew_gaussian,student_t")
    f.add_argument("--sizes", default="720")
    f.add_argument("--full-grid", action="store_true", help="sizes 720, 1440, 2160, 2880, 3600")
    f.add_argument("--techniques", default="pca,robust_pca,ica")
    f.add_argument("--levels", default="half,log2")
    f.add_argument("--replications", type=int, default=100)
    f.add_argument("--reference")
    f.add_argument("--p", type=int, default=19)
    f.add_argument("--reference-seed", type=int, default=0)
    f.add_argument("--strict-ica", action="store_true", help="count non-converged ICA as a failure")
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("-o", "--output", required=True)
    f.set_defaults(func=cmd_fidelity)

    s = sub.add_parser("simulate", help="network energy/delay sweeps")
    _add_common(s)
    s.add_argument("--axis", default="all", help="data_size, num_nodes, num_sources or all")
    s.add_argument("--values", help="comma-separated sweep values (default: the standard sweep)")
    s.add_argument("--reductions", default="none,half,log2")
    s.add_argument("--replications", type=int, default=30)
    s.add_argument("--event-log", help="directory for per-seed hop event CSVs")
    for fld in fields(SimConfig):
        if fld.name == "seed":
            continue
        default = getattr(SimConfig(), fld.name)
        kind = str if isinstance(default, Reduction) else type(default)
        s.add_argument(f"--{fld.name.replace('_', '-')}", dest=fld.name, type=kind, default=None)
    s.add_argument("-o", "--output", required=True, help="CSV file (single axis) or directory")
    s.set_defaults(func=cmd_simulate)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    raw = read_key_values(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, text in raw.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("config", "help"):
            raise ParseError(f"unknown config key {key!r} for '{args.command}'")
        action = actions[dest]
        if action.const is True and action.nargs == 0:
            defaults[dest] = text.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[dest] = action.type(text)
            except ValueError:
                raise ParseError(f"bad value for {key}: {text!r}") from None
        else:
            defaults[dest] = text
    sub.set_defaults(**defaults)
    # command-line flags still win over the file
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
        if args.seed is None:
            args.seed = default_seed()
        return args.func(args)
    except (MusaError, ValueError, OSError) as exc:
        print(f"musa {argv[0] if argv else ''}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
