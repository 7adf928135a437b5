"""Writers and readers for everything the command line emits.

CSV files use '.' decimals, '\\n' line endings and 17 significant digits,
so floats survive a round trip bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .algebra import OperatorSum
from .experiments import RecouplingReport, ScanResult, SymmetryReport


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def write_scan_csv(result: ScanResult, path) -> Path:
    return write_csv(path, [result.x_label, result.y_label, result.value_label], result.rows())


def read_scan_csv(path) -> ScanResult:
    header, data = read_csv(path)
    xs = np.array(list(dict.fromkeys(data[:, 0])))
    ys = np.array(list(dict.fromkeys(data[:, 1])))
    values = data[:, 2].reshape(len(xs), len(ys)).T
    return ScanResult(header[0], xs, header[1], ys, values, header[2])


# -- JSON ----------------------------------------------------------------------

def operator_to_json(op: OperatorSum) -> dict:
    terms = [{"word": w, "re": c.real, "im": c.imag} for w, c in sorted(op.items())]
    return {"n": op.n, "terms": terms}


def operator_from_json(obj: dict) -> OperatorSum:
    return OperatorSum(int(obj["n"]), {t["word"]: complex(t["re"], t.get("im", 0.0))
                                       for t in obj["terms"]})


def _pair_key(pair) -> str:
    return f"{pair[0]}-{pair[1]}"


def report_to_json(report: RecouplingReport) -> dict:
    return {
        "target_pair": list(report.target_pair),
        "ratio": report.ratio,
        "exact": report.exact,
        "pair_effective": {_pair_key(p): operator_to_json(op)
                           for p, op in report.pair_effective.items()},
        "deviation_norms": {_pair_key(p): v for p, v in report.deviation_norms.items()},
        "fidelity": report.fidelity,
        "spectator_error": report.spectator_error,
        "spectator_angle": report.spectator_angle,
        "metadata": report.metadata,
    }


def report_from_json(obj: dict) -> RecouplingReport:
    def pair(key):
        a, b = key.split("-")
        return int(a), int(b)

    return RecouplingReport(
        target_pair=tuple(obj["target_pair"]),
        pair_effective={pair(k): operator_from_json(v) for k, v in obj["pair_effective"].items()},
        deviation_norms={pair(k): float(v) for k, v in obj["deviation_norms"].items()},
        ratio=obj["ratio"], exact=obj["exact"], fidelity=obj.get("fidelity"),
        spectator_error=obj.get("spectator_error"),
        spectator_angle=obj.get("spectator_angle"), metadata=obj.get("metadata", {}))


def symmetry_to_json(report: SymmetryReport) -> dict:
    return {k: getattr(report, k) for k in report.__dataclass_fields__}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    text = json.dumps(_clean(obj), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
