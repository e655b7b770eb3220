"""CSV output with a reproducibility header.

Every CSV starts with one comment line ``# {json}`` holding the tool name,
version, the full config and its sha256.  Floats are written with ``repr``
so re-running the recorded config reproduces the data rows byte for byte.
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import sys

import numpy as np

from . import __version__

TOOL = "lastiterate"


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def header_line(config: dict) -> str:
    meta = {"tool": TOOL, "version": __version__, "config_hash": config_digest(config),
            "config": config}
    return "# " + json.dumps(meta, sort_keys=True, default=str)


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _sink(path):
    if path is None or str(path) == "-":
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


def write_csv(path, columns, rows, config: dict | None = None) -> None:
    """Write to ``path``, or to stdout when it is None or ``-``."""
    with _sink(path) as fh:
        if config is not None:
            fh.write(header_line(config) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_header(path) -> dict | None:
    """The JSON header of a CSV written by :func:`write_csv`, or None."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# {"):
        return None
    return json.loads(first[2:])


def read_csv(path) -> tuple[dict | None, list[dict]]:
    """Header metadata plus data rows as dicts of strings."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return read_header(path), list(csv.DictReader(lines))
