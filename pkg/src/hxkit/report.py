"""Structured analysis reports with canonical JSON and static HTML output.

The JSON form is canonical: keys sorted, floats rendered with %.10g, no
whitespace variation, so parse -> re-emit is byte-identical and output
digests are stable. The HTML render contains exactly the same numbers.
"""

from __future__ import annotations

import hashlib
import html
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def format_number(x) -> str:
    """Canonical numeric rendering used in both JSON and HTML."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if not np.isfinite(xf):
        return "null"
    s = "%.10g" % xf
    return s


def _canonical(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_number(obj)
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"')
        out = out.replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t")
        return '"' + out + '"'
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(((str(k), v) for k, v in obj.items()), key=lambda kv: kv[0])
        return "{" + ",".join(_canonical(k) + ":" + _canonical(v) for k, v in items) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def default_timestamp() -> str | None:
    """Reproducible by default: only SOURCE_DATE_EPOCH yields a timestamp."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(int(epoch)))


@dataclass
class AnalysisReport:
    tool: str
    parameters: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> {columns: [...], rows: [[...]]}
    inputs: dict = field(default_factory=dict)  # path -> sha256
    timestamp: str | None = None

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_table(self, name: str, columns: list[str], rows: list[list]) -> None:
        self.tables[name] = {"columns": list(columns), "rows": [list(r) for r in rows]}

    def to_json_text(self) -> str:
        doc = {
            "tool": self.tool,
            "parameters": self.parameters,
            "metrics": self.metrics,
            "tables": self.tables,
            "inputs": self.inputs,
        }
        if self.timestamp is not None:
            doc["timestamp"] = self.timestamp
        return _canonical(doc) + "\n"

    def to_html_text(self) -> str:
        def cell(v) -> str:
            if v is None:
                return ""
            if isinstance(v, str):
                return html.escape(v)
            return html.escape(format_number(v))

        def table(columns, rows) -> list[str]:
            out = ["<table>", "<tr>" + "".join(f"<th>{html.escape(str(c))}</th>" for c in columns) + "</tr>"]
            for row in rows:
                out.append("<tr>" + "".join(f"<td>{cell(v)}</td>" for v in row) + "</tr>")
            out.append("</table>")
            return out

        parts = [
            "<!DOCTYPE html>",
            "<html><head><meta charset='utf-8'>",
            f"<title>{html.escape(self.tool)}</title>",
            "<style>body{font-family:sans-serif}table{border-collapse:collapse;margin:1em 0}"
            "td,th{border:1px solid #999;padding:2px 8px;text-align:right}"
            "th{background:#eee}</style>",
            "</head><body>",
            f"<h1>{html.escape(self.tool)}</h1>",
        ]
        if self.timestamp:
            parts.append(f"<p>generated: {html.escape(self.timestamp)}</p>")
        if self.parameters:
            parts.append("<h2>Parameters</h2>")
            parts += table(["parameter", "value"],
                           [[k, v] for k, v in sorted(self.parameters.items())])
        if self.metrics:
            parts.append("<h2>Metrics</h2>")
            parts += table(["metric", "value"],
                           [[k, v] for k, v in sorted(self.metrics.items())])
        for name in sorted(self.tables):
            t = self.tables[name]
            parts.append(f"<h2>{html.escape(name)}</h2>")
            parts += table(t["columns"], t["rows"])
        if self.inputs:
            parts.append("<h2>Inputs</h2>")
            parts += table(["path", "sha256"],
                           [[k, v] for k, v in sorted(self.inputs.items())])
        parts.append("</body></html>")
        return "\n".join(parts) + "\n"


def emit_report(report: AnalysisReport, directory: str | Path, basename: str,
                formats: tuple[str, ...] = ("json", "html")) -> list[Path]:
    """Write the report in the requested formats; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "json":
            path = directory / f"{basename}.json"
            path.write_text(report.to_json_text())
        elif fmt == "html":
            path = directory / f"{basename}.html"
            path.write_text(report.to_html_text())
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        written.append(path)
    return written


def parse_report_json(text: str) -> dict:
    import json

    return json.loads(text)
