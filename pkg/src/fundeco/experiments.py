"""Simplex sweeps over initial wealth distributions."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig
from .engine import RunRecord, run_ensemble
from .stochastic import derive_stream

FULL_WINDOW = 10_000
SWEEP_COLUMNS = ("w_nt", "w_vi", "w_tf", "mean_nt", "mean_vi", "mean_tf",
                 "std_nt", "std_vi", "std_tf", "completed", "failed")


def sample_simplex(n: int, seed: int = 0) -> np.ndarray:
    """``n`` i.i.d. uniform points on the 2-simplex, shape (n, 3).

    Normalized unit exponentials, i.e. a flat Dirichlet.
    """
    if n < 1:
        raise ValueError("need at least one point")
    e = derive_stream(seed, "simplex").generator.standard_exponential((n, 3))
    pts = e / e.sum(axis=1, keepdims=True)
    # put the rounding residue on the largest coordinate so rows sum to 1
    big = np.argmax(pts, axis=1)
    pts[np.arange(n), big] += 1.0 - pts.sum(axis=1)
    return pts


def run_seed(master_seed: int, point, rep: int) -> int:
    """Seed for one sweep member, keyed on the point's coordinates.

    Adding reps or points never moves existing runs, and reordering the point
    list only reorders the results.
    """
    key = ",".join(repr(float(x)) for x in np.atleast_1d(point))
    h = hashlib.blake2b(f"{master_seed}:{key}:{rep}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def terminal_window(days: int) -> int:
    return max(1, min(FULL_WINDOW, days // 5))


def terminal_wealth_share(record: RunRecord, window: int) -> tuple[np.ndarray, bool]:
    """Mean per-style wealth share (nt, vi, tf) over the final ``window`` days.

    Returns the shares and a flag that is True when the run was shorter than
    the window and the whole run was used instead.
    """
    ws = np.asarray(record.wealth_shares)[:, :3]
    short = ws.shape[0] < window
    if ws.shape[0] == 0:
        raise ValueError("empty run")
    tail = ws if short else ws[-window:]
    return tail.mean(axis=0), short


@dataclass
class SweepResult:
    points: np.ndarray
    mean: np.ndarray  # (n, 3), nan where no run completed
    std: np.ndarray
    completed: np.ndarray
    failed: np.ndarray
    reps: int
    years: float
    window: int
    failures: list = field(default_factory=list)  # (point, rep, message)

    def rows(self):
        for i in range(self.points.shape[0]):
            yield [*self.points[i], *self.mean[i], *self.std[i], int(self.completed[i]), int(self.failed[i])]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for row in self.rows():
                w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])

    def interior(self, min_coord: float = 0.15) -> np.ndarray:
        """Indices of interior points with at least one completed run."""
        ok = (self.points.min(axis=1) >= min_coord) & (self.completed > 0)
        return np.flatnonzero(ok)

    def summary(self, min_coord: float = 0.15) -> dict:
        idx = self.interior(min_coord)
        m = self.mean[idx]
        p = self.points[idx]
        n = idx.shape[0]
        vi_dom = int(np.sum((m[:, 1] > m[:, 0]) & (m[:, 1] > m[:, 2])))
        nt_dec = int(np.sum(m[:, 0] < p[:, 0]))
        all_interior = int(np.sum(self.points.min(axis=1) >= min_coord))
        return {
            "interior_points": all_interior,
            "interior_completed": n,
            "vi_dominant": vi_dom,
            "nt_declines": nt_dec,
            "vi_dominant_frac": vi_dom / n if n else float("nan"),
            "nt_declines_frac": nt_dec / n if n else float("nan"),
            "runs_failed": int(self.failed.sum()),
        }


def sweep_configs(points, reps: int, years: float, base: SimConfig):
    days = int(round(252 * years))
    master = base.run.master_seed
    out = []
    for pt in np.asarray(points, float):
        shares = [float(x) for x in pt]
        for r in range(reps):
            out.append(base.with_updates(population={"initial_shares": shares},
                                         run={"t_max_days": days, "master_seed": run_seed(master, pt, r)}))
    return out


def run_sweep(points, reps: int, years: float, base: SimConfig | None = None, workers: int | None = None,
              window: int | None = None) -> SweepResult:
    """Run every point ``reps`` times for ``years`` and average terminal wealth shares.

    ``window`` defaults to :func:`terminal_window` of the run length. Failed runs
    are excluded from the averages and counted per point.
    """
    base = SimConfig() if base is None else base
    pts = np.asarray(points, float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if np.any(pts < 0) or np.any(np.abs(pts.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("points must be non-negative and sum to 1")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    days = int(round(252 * years))
    window = terminal_window(days) if window is None else int(window)
    if window < 1:
        raise ValueError("window must be at least one day")
    results = run_ensemble(sweep_configs(pts, reps, years, base), workers=workers)

    n = pts.shape[0]
    mean = np.full((n, 3), np.nan)
    std = np.full((n, 3), np.nan)
    completed = np.zeros(n, np.int64)
    failed = np.zeros(n, np.int64)
    failures = []
    for i in range(n):
        shares = []
        for r in range(reps):
            rec = results[i * reps + r]
            if isinstance(rec, Exception):
                failures.append((i, r, f"{type(rec).__name__}: {rec}"))
                continue
            if not rec.completed or rec.days == 0:
                failures.append((i, r, rec.failure or "empty run"))
                continue
            s, _ = terminal_wealth_share(rec, window)
            shares.append(s / s.sum())
        completed[i] = len(shares)
        failed[i] = reps - len(shares)
        if shares:
            a = np.array(shares)
            mean[i] = a.mean(axis=0)
            std[i] = a.std(axis=0)
    return SweepResult(pts, mean, std, completed, failed, reps, years, window, failures)
