"""Serialization of estimates, test results and fits to CSV and JSON text.

All writers return strings so callers can emit output atomically. Floats are
written with ``repr`` (shortest round-trip form), which keeps output
byte-stable across runs.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .cox import CoxFit, ResidualSet
from .multistate import TransitionMatrixPath
from .stepfun import StepFunction
from .univariate import PathEstimate


def number(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def _clean(obj):
    """Make an object JSON-safe: arrays to lists, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------- univariate paths

ESTIMATE_COLUMNS = ("time", "estimate", "variance", "lower", "upper")


def estimate_csv(estimate: PathEstimate) -> str:
    cols = estimate.table()
    rows = zip(*(cols[c] for c in ESTIMATE_COLUMNS))
    return csv_text(ESTIMATE_COLUMNS, ([number(v) for v in row] for row in rows))


def estimate_json(estimate: PathEstimate) -> str:
    cols = estimate.table()
    return dumps({
        "kind": getattr(estimate, "kind", "estimate"),
        "transition": list(estimate.transition),
        "group": None if estimate.group is None else str(estimate.group),
        "level": estimate.level,
        "transform": estimate.transform,
        "path": [dict(zip(ESTIMATE_COLUMNS, row)) for row in zip(*(cols[c].tolist() for c in ESTIMATE_COLUMNS))],
    })


# --------------------------------------------------------- transition paths


def _with_start(path: TransitionMatrixPath):
    k = path.k
    times = np.concatenate([[path.start], path.times])
    mats = np.concatenate([np.eye(k)[None], path.matrices])
    cov = None
    if path.covariance is not None:
        cov = np.concatenate([np.zeros((1, k * k, k * k)), path.covariance])
    return times, mats, cov


def transition_json(path: TransitionMatrixPath) -> str:
    times, mats, cov = _with_start(path)
    entries = []
    for i, t in enumerate(times):
        item = {"time": t, "matrix": mats[i]}
        if cov is not None:
            item["covariance"] = cov[i]
        entries.append(item)
    return dumps({"states": list(path.states), "start": path.start, "path": entries})


def transition_csv(path: TransitionMatrixPath) -> str:
    """Long format ``time,from,to,estimate,variance``; variance is blank without covariance."""
    times, mats, cov = _with_start(path)
    k = path.k
    rows = []
    for i, t in enumerate(times):
        for h in range(k):
            for j in range(k):
                var = "" if cov is None else number(cov[i, h * k + j, h * k + j])
                rows.append([number(t), path.states[h], path.states[j], number(mats[i, h, j]), var])
    return csv_text(("time", "from", "to", "estimate", "variance"), rows)


# ------------------------------------------------------------- test tables


def ksample_table(result) -> str:
    d = result.to_dict()
    lines = [
        f"weights      {d['weights_used']}",
        f"groups       {', '.join('' if g is None else g for g in d['groups'])}",
        f"statistic    {d['statistic']}",
        f"variance     {d['variance']}",
        f"chi_square   {number(d['chi_square'])}",
        f"df           {d['df']}",
        f"p_value      {number(d['p_value'])}",
    ]
    return "\n".join(lines) + "\n"


def ksample_csv(result) -> str:
    d = result.to_dict()
    return csv_text(("chi_square", "df", "p_value", "weights_used"),
                [[number(d["chi_square"]), d["df"], number(d["p_value"]), d["weights_used"]]])


# -------------------------------------------------------------------- Cox


def cox_csv(fit: CoxFit) -> str:
    d = fit.to_dict()
    rows = [[name, number(b), number(s), number(z), number(p)]
            for name, b, s, z, p in zip(d["covariates"], d["beta"], d["se"], d["z"], d["p"])]
    return csv_text(("covariate", "beta", "se", "z", "p"), rows)


def step_csv(fn: StepFunction, name: str = "estimate") -> str:
    times = np.concatenate([[0.0], fn.jump_times])
    values = np.concatenate([[fn.origin], fn.values])
    return csv_text(("time", name), ([number(t), number(v)] for t, v in zip(times, values)))


def residuals_csv(residuals: ResidualSet) -> str:
    """Long format ``subject,time,residual``: each subject's path at the event times in its follow-up."""
    data = residuals.data
    n = residuals.subject_ids.size
    first = np.full(n, np.inf)
    last = np.full(n, -np.inf)
    np.minimum.at(first, data.subject, data.entry)
    np.maximum.at(last, data.subject, data.exit)
    grid = np.union1d(data.times, last)
    values = np.stack([residuals.at(t) for t in grid], axis=1)   # (subjects, grid)
    rows = []
    for s in range(n):
        inside = (grid > first[s]) & (grid <= last[s])
        for t, v in zip(grid[inside], values[s, inside]):
            rows.append([residuals.subject_ids[s], number(t), number(v)])
    return csv_text(("subject", "time", "residual"), rows)


# -------------------------------------------------------------- plot data


def emit_plot_data(estimate: PathEstimate | StepFunction, until: float | None = None) -> str:
    """Staircase coordinates ``x,y[,lower,upper]`` for drawing a right-continuous step path.

    Starts at ``(0, origin)``; each jump contributes two rows sharing ``x``,
    the value before and after the jump. ``until`` extends the last level to a
    final ``x``. An estimate without jumps gives a header-only file.
    """
    if isinstance(estimate, PathEstimate):
        fns = [estimate.estimate] + [b for b in (estimate.lower, estimate.upper) if b is not None]
        header = ["x", "y"] + (["lower", "upper"] if len(fns) == 3 else [])
    else:
        fns = [estimate]
        header = ["x", "y"]
    base = fns[0]
    if len(base) == 0:
        return csv_text(header, [])
    levels = [np.concatenate([[f.origin], f.values]) for f in fns]
    rows = [[number(0.0)] + [number(lv[0]) for lv in levels]]
    for i, t in enumerate(base.jump_times):
        rows.append([number(t)] + [number(lv[i]) for lv in levels])
        rows.append([number(t)] + [number(lv[i + 1]) for lv in levels])
    if until is not None and until > base.jump_times[-1]:
        rows.append([number(until)] + [number(lv[-1]) for lv in levels])
    return csv_text(header, rows)
