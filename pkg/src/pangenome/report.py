"""Run reports with deterministic JSON and CSV renderings.

A report is a tree of insertion-ordered dicts.  Both renderings walk the
same tree and format floats with ``repr``, so they carry identical values
and are byte-identical across runs with equal inputs.  Wall time is only
rendered when explicitly requested because it would break that guarantee.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from typing import Any

from . import __version__
from .params import ModelParams
from .stats import MCEstimate


def estimate(est: MCEstimate) -> dict:
    return {"mean": est.mean, "std_error": est.std_error, "variance": est.variance, "reps": est.reps}


@dataclasses.dataclass
class RunReport:
    command: str
    params: ModelParams | None
    seed: int | None = None
    provenance: dict = dataclasses.field(default_factory=dict)
    results: dict = dataclasses.field(default_factory=dict)
    diagnostics: list = dataclasses.field(default_factory=list)
    wall_time: float | None = None

    def warn(self, kind: str, message: str) -> None:
        self.diagnostics.append({"kind": kind, "message": message})

    def to_dict(self, *, timing: bool = False) -> dict:
        out: dict[str, Any] = {
            "command": self.command,
            "version": __version__,
            "params": self.params.as_dict() if self.params is not None else None,
            "seed": self.seed,
            "provenance": self.provenance,
            "results": self.results,
            "diagnostics": self.diagnostics,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return _clean(out)

    def to_json(self, *, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing=timing), indent=2, allow_nan=False) + "\n"

    def to_csv(self, *, timing: bool = False) -> str:
        """Long format: one ``path,value`` row per leaf of :meth:`to_dict`.

        List elements are addressed by 0-based position, e.g.
        ``results.spectrum.mean.0``.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "value"])
        for path, value in _leaves(self.to_dict(timing=timing), ""):
            writer.writerow([path, _format(value)])
        return buf.getvalue()

    def render(self, fmt: str, *, timing: bool = False) -> str:
        if fmt == "json":
            return self.to_json(timing=timing)
        if fmt == "csv":
            return self.to_csv(timing=timing)
        raise ValueError(f"unknown format {fmt!r}")


def _clean(value):
    """Plain Python types; non-finite floats become strings so JSON stays strict."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _leaves(value, prefix):
    if isinstance(value, dict):
        for k, v in value.items():
            yield from _leaves(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(value, list):
        if not value:
            yield prefix, ""
        for i, v in enumerate(value):
            yield from _leaves(v, f"{prefix}.{i}")
    else:
        yield prefix, value


def _format(value) -> str:
    """Scalar text identical to the JSON token (strings unquoted)."""
    if isinstance(value, str):
        return value
    return json.dumps(value)


def table_csv(header: list[str], rows: list[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(_clean(v)) for v in row])
    return buf.getvalue()
