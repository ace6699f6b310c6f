"""Summaries of a diagnostics CSV."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .sim import CSV_HEADER


class ReportError(ValueError):
    pass


@dataclass
class Summary:
    rows: int
    mean_error: float
    max_error: float
    worst_frame: int
    mean_ms_advect: float
    mean_ms_conserve: float
    mean_ms_project: float
    final_vof_vol: float
    final_particle_vol: float
    final_grid_vol: float

    def lines(self) -> list[str]:
        return [
            f"steps            {self.rows}",
            f"mean cons. error {self.mean_error * 100:.6f} %",
            f"max cons. error  {self.max_error * 100:.6f} %  (frame {self.worst_frame})",
            f"ms advect        {self.mean_ms_advect:.1f}",
            f"ms conserve      {self.mean_ms_conserve:.1f}",
            f"ms project       {self.mean_ms_project:.1f}",
            f"final volumes    vof {self.final_vof_vol:.6e}  spray {self.final_particle_vol:.6e}"
            f"  grid {self.final_grid_vol:.6e}",
        ]


def read_diagnostics(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ReportError(f"{path}: header does not match the diagnostics format")
    body = rows[1:]
    for n, r in enumerate(body, start=2):
        if len(r) != len(CSV_HEADER):
            raise ReportError(f"{path}:{n}: expected {len(CSV_HEADER)} fields, got {len(r)}")
    try:
        cols = np.array(body, dtype=float).reshape(len(body), len(CSV_HEADER))
    except ValueError as exc:
        raise ReportError(f"{path}: non-numeric field ({exc})") from None
    if not np.all(np.isfinite(cols)):
        raise ReportError(f"{path}: non-finite values")
    return {k: cols[:, i] for i, k in enumerate(CSV_HEADER)}


def summarize(data: dict[str, np.ndarray]) -> Summary:
    err = data["cons_err_rel"]
    if len(err) == 0:
        return Summary(0, 0.0, 0.0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    worst = int(np.argmax(err))
    return Summary(
        rows=len(err),
        mean_error=float(err.mean()),
        max_error=float(err.max()),
        worst_frame=int(data["frame"][worst]),
        mean_ms_advect=float(data["ms_advect"].mean()),
        mean_ms_conserve=float(data["ms_conserve"].mean()),
        mean_ms_project=float(data["ms_project"].mean()),
        final_vof_vol=float(data["vof_vol"][-1]),
        final_particle_vol=float(data["particle_vol"][-1]),
        final_grid_vol=float(data["grid_vol"][-1]),
    )


def write_summary(path, summary: Summary) -> None:
    d = asdict(summary)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.keys())
        w.writerow(repr(v) if isinstance(v, float) else str(v) for v in d.values())
