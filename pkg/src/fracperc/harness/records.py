"""Experiment records: JSON with a schema version, CSV metric rows."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig

SCHEMA_VERSION = 1

# Published column schema per recipe; every emitted row has exactly these keys.
COLUMNS = {
    "dimension-sweep": ["trial", "seed", "survived", "slope", "target"],
    "slice-growth": ["trial", "seed", "n", "a_n", "b_n", "lambda", "C2", "max_count", "verdict"],
    "projection-dimension": ["trial", "seed", "alpha", "slope", "target"],
    "diagonal-event": ["k", "trials", "successes", "frequency", "wilson_lo", "wilson_hi", "lower_bound", "upper_bound", "inside"],
    "sum-certificate": ["trial", "seed", "survived", "cert_lo", "cert_hi", "cert_len", "certified"],
    "probability-adjust": ["trial", "d", "M", "probs", "q", "violations"],
    "distance-certificate": ["trial", "seed", "survived", "cert_lo", "cert_hi", "cert_len", "certified"],
    "hoeffding-tail": ["summands", "t", "trials", "hits", "empirical", "se", "bound", "passed"],
}


def format_value(v):
    """Stable text form of a metric value (floats as ``.17g``)."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    if isinstance(v, (list, tuple)):
        return ";".join(format_value(x) for x in v)
    return str(v)


def rows_to_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) for c in columns])
    return buf.getvalue()


def schema_errors(recipe, rows):
    cols = set(COLUMNS[recipe])
    return [f"row {i}: keys {sorted(set(r) ^ cols)} differ from schema" for i, r in enumerate(rows) if set(r) != cols]


@dataclass
class ExperimentRecord:
    config: ExperimentConfig
    rows: list
    summary: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    aborted: str | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def columns(self):
        return COLUMNS[self.config.recipe]

    @property
    def passed(self):
        return self.aborted is None and all(self.verdicts.values())

    def metrics_csv(self):
        return rows_to_csv(self.columns, self.rows)

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "recipe": self.config.recipe,
            "config": self.config.to_dict(),
            "columns": self.columns,
            "rows": [{c: _jsonable(r[c]) for c in self.columns} for r in self.rows],
            "summary": {k: _jsonable(v) for k, v in self.summary.items()},
            "verdicts": self.verdicts,
            "passed": self.passed,
            "aborted": self.aborted,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    @classmethod
    def from_dict(cls, data):
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported record schema {data.get('schema_version')!r}")
        config = ExperimentConfig.from_dict(data["config"])
        return cls(config, data["rows"], data.get("summary", {}), data.get("verdicts", {}), data.get("aborted"))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write(self, path, fmt=None):
        """Write CSV metric rows (plus a sibling ``.json`` record) or the JSON record."""
        path = Path(path)
        fmt = fmt or self.config.format
        if fmt == "csv":
            path.write_text(self.metrics_csv())
            path.with_suffix(path.suffix + ".json").write_text(self.to_json())
        else:
            path.write_text(self.to_json())


def _jsonable(v):
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return None
    if isinstance(v, tuple):
        return list(v)
    return v
