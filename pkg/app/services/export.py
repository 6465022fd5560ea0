"""
CSV writers and readers.

All files are UTF-8 with a single header row and '.' decimals. Floats are
written with repr so a parsed file reproduces the written values exactly.
Metric series carry '#'-prefixed metadata lines (one JSON document) ahead
of the header.
"""

import contextlib
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from app.core.errors import ParseError
from app.core.ode import DeviationBound, DeviationBoundInputs
from app.core.simulator import Event
from app.core.spectral import SpectralResult
from app.services.experiment import DeviationReport, MetricSeries, OccupationReport

MEAN_TOLERANCE = 1e-12
METADATA_PREFIX = "# "


def fmt(value) -> str:
    return repr(float(value))


@contextlib.contextmanager
def open_output(path: Optional[Union[str, Path]]) -> Iterator[TextIO]:
    """Yield a writable text stream: the file at path, or stdout when path is None."""
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        yield handle


def _writer(out: TextIO):
    return csv.writer(out, lineterminator="\n")


# =============================================================================
# METRIC SERIES
# =============================================================================

def _series_columns(runs: int, instantaneous: bool) -> List[str]:
    columns = ["t", "epoch", "lambda2", "RQ_mean", "CS_mean"]
    columns += [f"RQ_run{r}" for r in range(runs)]
    columns += [f"CS_run{r}" for r in range(runs)]
    if instantaneous:
        columns += ["RQ_inst_mean", "CS_inst_mean"]
        columns += [f"RQ_inst_run{r}" for r in range(runs)]
        columns += [f"CS_inst_run{r}" for r in range(runs)]
    return columns


def write_metric_series(series: MetricSeries, out: TextIO) -> None:
    out.write(METADATA_PREFIX + json.dumps(series.metadata, sort_keys=True) + "\n")
    instantaneous = series.rq_inst is not None
    writer = _writer(out)
    writer.writerow(_series_columns(series.runs, instantaneous))
    rq_mean, cs_mean = series.rq_mean, series.cs_mean
    for i, t in enumerate(series.times):
        row = [fmt(t), str(int(series.epochs[i])), fmt(series.lambda2[i]), fmt(rq_mean[i]), fmt(cs_mean[i])]
        row += [fmt(v) for v in series.rq[:, i]]
        row += [fmt(v) for v in series.cs[:, i]]
        if instantaneous:
            row += [fmt(series.rq_inst[:, i].mean()), fmt(series.cs_inst[:, i].mean())]
            row += [fmt(v) for v in series.rq_inst[:, i]]
            row += [fmt(v) for v in series.cs_inst[:, i]]
        writer.writerow(row)


def _split_metadata(text: str) -> Tuple[Dict, str]:
    lines = text.splitlines(keepends=True)
    meta_lines = [line for line in lines if line.startswith("#")]
    body = "".join(line for line in lines if not line.startswith("#"))
    metadata: Dict = {}
    for number, line in enumerate(meta_lines, start=1):
        payload = line[1:].strip()
        if not payload:
            continue
        try:
            metadata.update(json.loads(payload))
        except json.JSONDecodeError as exc:
            raise ParseError(f"metadata is not JSON: {exc}", number) from exc
    return metadata, body


def _check_mean(name: str, stored: np.ndarray, per_run: np.ndarray) -> None:
    recomputed = per_run.mean(axis=0)
    both_nan = np.isnan(stored) & np.isnan(recomputed)
    gap = np.where(both_nan, 0.0, np.abs(stored - recomputed))
    if np.any(~(gap <= MEAN_TOLERANCE)):
        raise ParseError(f"{name} column disagrees with its per-run columns")


def read_metric_series(source: Union[str, Path, TextIO]) -> MetricSeries:
    """Parse a file written by write_metric_series; the mean columns are checked against the runs."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    metadata, body = _split_metadata(text)
    reader = csv.reader(io.StringIO(body))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("metric series has no header row") from None
    rows = [row for row in reader if row]
    if not rows:
        raise ParseError("metric series has no data rows")
    index = {name: i for i, name in enumerate(header)}
    runs = sum(1 for name in header if name.startswith("RQ_run"))
    instantaneous = "RQ_inst_mean" in index
    if header != _series_columns(runs, instantaneous):
        raise ParseError("unexpected metric series header")

    def column(name: str) -> np.ndarray:
        return np.array([float(row[index[name]]) for row in rows])

    def block(prefix: str) -> np.ndarray:
        return np.vstack([column(f"{prefix}{r}") for r in range(runs)])

    for number, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", number)

    series = MetricSeries(
        times=column("t"),
        epochs=np.array([int(row[index["epoch"]]) for row in rows]),
        lambda2=column("lambda2"),
        rq=block("RQ_run"),
        cs=block("CS_run"),
        rq_inst=block("RQ_inst_run") if instantaneous else None,
        cs_inst=block("CS_inst_run") if instantaneous else None,
        metadata=metadata,
    )
    _check_mean("RQ_mean", column("RQ_mean"), series.rq)
    _check_mean("CS_mean", column("CS_mean"), series.cs)
    return series


# =============================================================================
# SINGLE RUNS
# =============================================================================

def write_events_csv(events: Iterable[Event], out: TextIO, labels: Optional[Sequence[int]] = None) -> None:
    """t,event_kind,type,from,to; nodes are written as labels when given."""
    writer = _writer(out)
    writer.writerow(["t", "event_kind", "type", "from", "to"])
    for event in events:
        source, target = event.source, event.target
        if labels is not None:
            source, target = labels[source], labels[target]
        writer.writerow([fmt(event.time), event.kind.value, event.walker_type.value, source, target])


def write_samples_csv(rows: Iterable[Tuple[float, float, float]], out: TextIO) -> None:
    """t,RQ,CS of one run."""
    writer = _writer(out)
    writer.writerow(["t", "RQ", "CS"])
    for t, rq, cs in rows:
        writer.writerow([fmt(t), fmt(rq), fmt(cs)])


# =============================================================================
# SPECTRA, ODE, DEVIATIONS
# =============================================================================

def write_spectrum_csv(spectrum: SpectralResult, out: TextIO, labels: Optional[Sequence[int]] = None) -> None:
    """k,eigenvalue,v_<label>...: one row per eigenpair, 1-based k."""
    size = len(spectrum)
    labels = list(range(size)) if labels is None else list(labels)
    writer = _writer(out)
    writer.writerow(["k", "eigenvalue"] + [f"v_{label}" for label in labels])
    for k in range(1, size + 1):
        value, vector = spectrum.pair(k)
        writer.writerow([k, fmt(value)] + [fmt(v) for v in vector])


def write_partition_csv(
    members: Sequence[int],
    labels: Sequence[int],
    summary: Dict,
    out: TextIO,
) -> None:
    """'#' metadata line with the cut values, then label,side (1 for S, 0 for its complement)."""
    out.write(METADATA_PREFIX + json.dumps(summary, sort_keys=True) + "\n")
    inside = set(members)
    writer = _writer(out)
    writer.writerow(["label", "side"])
    for index, label in enumerate(labels):
        writer.writerow([label, 1 if index in inside else 0])


def write_ode_series(rows: Iterable[Tuple[float, float, float, float, float]], out: TextIO) -> None:
    """t,RQ,CS,V,Lambda of the normalized ODE direction."""
    writer = _writer(out)
    writer.writerow(["t", "RQ", "CS", "V", "Lambda"])
    for row in rows:
        writer.writerow([fmt(v) for v in row])


def write_deviation_report(report: DeviationReport, out: TextIO) -> None:
    out.write(METADATA_PREFIX + json.dumps(report.metadata, sort_keys=True) + "\n")
    seeds = max(len(row.deviations) for row in report.rows)
    writer = _writer(out)
    writer.writerow(
        ["n", "median", "bound", "raw_bound", "log_bound", "M", "M_estimated"]
        + [f"dev_seed{s}" for s in range(seeds)]
    )
    for row in report.rows:
        writer.writerow(
            [
                row.n,
                fmt(row.median),
                fmt(row.bound.probability),
                fmt(row.bound.raw),
                fmt(row.bound.log_raw),
                fmt(report.M),
                str(report.M_estimated).lower(),
            ]
            + [fmt(v) for v in row.deviations]
        )


def write_occupation_report(report: OccupationReport, out: TextIO) -> None:
    """One row per run; exit_time is nan when the run never left the neighborhood after entering it."""
    out.write(METADATA_PREFIX + json.dumps(report.metadata, sort_keys=True) + "\n")
    writer = _writer(out)
    writer.writerow(["run", "H", "exit_time"])
    for i, (fraction, leaves) in enumerate(zip(report.fractions, report.exit_times)):
        writer.writerow([i, fmt(fraction), fmt(math.nan if leaves is None else leaves)])


def write_bound_csv(inputs: DeviationBoundInputs, bound: DeviationBound, out: TextIO) -> None:
    writer = _writer(out)
    writer.writerow(["n", "kappa", "N", "T", "epsilon", "M", "bound", "raw_bound", "log_bound"])
    writer.writerow(
        [
            inputs.n,
            fmt(inputs.kappa),
            inputs.N,
            fmt(inputs.T),
            fmt(inputs.epsilon),
            fmt(inputs.M),
            fmt(bound.probability),
            fmt(bound.raw),
            fmt(bound.log_raw),
        ]
    )
