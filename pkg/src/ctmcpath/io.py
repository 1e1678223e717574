"""File formats: dense matrix CSV/JSON and path JSONL/CSV.

Floats are written with ``repr`` (shortest round-trip form), so
``parse(emit(x))`` reproduces every rate and time field bit-exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json

from .core import RateMatrix, SamplePath, StateSpace, validate_rate_matrix


def emit_matrix_csv(q: RateMatrix) -> str:
    """Header row of state labels, then one row of rates per state
    (full square matrix including the diagonal)."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(q.states.labels)
    for row in q.q:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def parse_matrix_csv(text: str, repair: bool = False) -> RateMatrix:
    rows = [r for r in csv.reader(_io.StringIO(text)) if r]
    if len(rows) < 2:
        raise ValueError("matrix CSV needs a header row and one row per state")
    labels = [c.strip() for c in rows[0]]
    values = [[float(c) for c in r] for r in rows[1:]]
    if len(values) != len(labels):
        raise ValueError(f"expected {len(labels)} rows after the header, got {len(values)}")
    return validate_rate_matrix(values, labels, repair=repair)


def emit_matrix_json(q: RateMatrix) -> str:
    return json.dumps({"labels": list(q.states.labels), "q": [list(map(float, r)) for r in q.q]})


def parse_matrix_json(text: str, repair: bool = False) -> RateMatrix:
    doc = json.loads(text)
    return validate_rate_matrix(doc["q"], doc["labels"], repair=repair)


def emit_matrix(q: RateMatrix, fmt: str) -> str:
    if fmt == "csv":
        return emit_matrix_csv(q)
    if fmt == "json":
        return emit_matrix_json(q)
    raise ValueError(f"unknown matrix format {fmt!r}")


def parse_matrix(text: str, fmt: str | None = None, repair: bool = False) -> RateMatrix:
    """Parse a matrix in either format; sniffs JSON by its leading brace."""
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("{") else "csv"
    if fmt == "csv":
        return parse_matrix_csv(text, repair=repair)
    if fmt == "json":
        return parse_matrix_json(text, repair=repair)
    raise ValueError(f"unknown matrix format {fmt!r}")


def _segments_with_bounds(path: SamplePath, states: StateSpace):
    bounds = list(path.times) + [path.horizon]
    for k, s in enumerate(path.states):
        yield states.labels[int(s)], float(bounds[k]), float(bounds[k + 1])


def emit_paths_jsonl(paths, states: StateSpace) -> str:
    """One JSON object per path:
    ``{"path_id": i, "segments": [{"state", "t_in", "t_out"}, ...]}``."""
    lines = []
    for i, path in enumerate(paths):
        segments = [
            {"state": lab, "t_in": t_in, "t_out": t_out}
            for lab, t_in, t_out in _segments_with_bounds(path, states)
        ]
        lines.append(json.dumps({"path_id": i, "segments": segments}))
    return "\n".join(lines) + "\n" if lines else ""


def parse_paths_jsonl(text: str, states: StateSpace) -> list[SamplePath]:
    paths = []
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        segs = doc["segments"]
        horizon = float(segs[-1]["t_out"])
        paths.append(
            SamplePath(
                horizon,
                [states.index(s["state"]) for s in segs],
                [float(s["t_in"]) for s in segs],
            )
        )
    return paths


PATH_CSV_HEADER = ("path_id", "seg_index", "state", "t_in", "t_out")


def emit_paths_csv(paths, states: StateSpace) -> str:
    """Long-form CSV: path_id, seg_index, state, t_in, t_out."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PATH_CSV_HEADER)
    for i, path in enumerate(paths):
        for k, (lab, t_in, t_out) in enumerate(_segments_with_bounds(path, states)):
            writer.writerow([i, k, lab, repr(t_in), repr(t_out)])
    return buf.getvalue()


def parse_paths_csv(text: str, states: StateSpace) -> list[SamplePath]:
    reader = csv.reader(_io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != PATH_CSV_HEADER:
        raise ValueError(f"expected header {','.join(PATH_CSV_HEADER)}")
    by_path: dict[int, list] = {}
    for row in reader:
        if not row:
            continue
        pid, seg, lab, t_in, t_out = int(row[0]), int(row[1]), row[2], float(row[3]), float(row[4])
        by_path.setdefault(pid, []).append((seg, lab, t_in, t_out))
    paths = []
    for pid in sorted(by_path):
        segs = sorted(by_path[pid])
        horizon = segs[-1][3]
        paths.append(
            SamplePath(horizon, [states.index(s[1]) for s in segs], [s[2] for s in segs])
        )
    return paths


def emit_paths(paths, states: StateSpace, fmt: str) -> str:
    if fmt == "jsonl":
        return emit_paths_jsonl(paths, states)
    if fmt == "csv":
        return emit_paths_csv(paths, states)
    raise ValueError(f"unknown path format {fmt!r}")


def parse_paths(text: str, states: StateSpace, fmt: str | None = None) -> list[SamplePath]:
    if fmt is None:
        fmt = "jsonl" if text.lstrip().startswith("{") else "csv"
    if fmt == "jsonl":
        return parse_paths_jsonl(text, states)
    if fmt == "csv":
        return parse_paths_csv(text, states)
    raise ValueError(f"unknown path format {fmt!r}")
