"""Machine-readable run reports: JSON with embedded manifest, column-stable CSV.

Reports are deterministic for a fixed config and seed; wall-clock timing sits
in its own top-level field so consumers can strip it before comparing bytes.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .grids import GridFunction


def make_manifest(subcommand: str, config: dict, seed: int, outputs: list[str]) -> dict:
    return {
        "subcommand": subcommand,
        "config": config,
        "artifact_version": __version__,
        "seed": seed,
        "outputs": sorted(outputs),
    }


def assemble_report(
    manifest: dict,
    results: list[dict],
    max_residual: float,
    passed: bool,
    started_at: float,
) -> dict:
    return {
        "manifest": manifest,
        "results": results,
        "max_residual": max_residual,
        "pass": bool(passed),
        "timing": {"wall_clock_s": time.time() - started_at},
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_encode) + "\n"


def strip_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "timing"}


def _encode(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"unserializable {type(value)!r}")


def write_report(report: dict, path: str | Path | None) -> None:
    text = report_json(report)
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    """Column-stable CSV: the header order is part of the interface."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# GridFunction file format for the `darboux --seed-source file` path: JSON with
# start/step and values as nested [re, im] pairs.

def gridfunction_to_dict(g: GridFunction) -> dict:
    return {
        "start": g.start,
        "step": g.step,
        "values": [
            [[[v.real, v.imag] for v in row] for row in mat] for mat in g.values
        ],
    }


def gridfunction_from_dict(data: dict) -> GridFunction:
    vals = np.array(
        [
            [[complex(re, im) for re, im in row] for row in mat]
            for mat in data["values"]
        ],
        dtype=complex,
    )
    return GridFunction(float(data["start"]), float(data["step"]), vals)


def load_gridfunction(path: str | Path) -> GridFunction:
    return gridfunction_from_dict(json.loads(Path(path).read_text()))


def save_gridfunction(g: GridFunction, path: str | Path) -> None:
    Path(path).write_text(json.dumps(gridfunction_to_dict(g)) + "\n")
