"""Nelson-Aalen and Kaplan-Meier estimators with martingale variance estimates."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .errors import InputError, NotSurvivalData, UnknownTransition
from .event_data import CountingPanel
from .stepfun import StepFunction


@dataclass(frozen=True, eq=False)
class PathEstimate:
    """Estimated step function with its variance path and optional pointwise band."""

    estimate: StepFunction
    variance: StepFunction
    n_at_risk: np.ndarray
    n_events: np.ndarray
    transition: tuple[str, str | None]
    group: object = None
    lower: StepFunction | None = None
    upper: StepFunction | None = None
    level: float | None = None
    transform: str | None = None

    @property
    def times(self) -> np.ndarray:
        return self.estimate.jump_times

    def __call__(self, t):
        return self.estimate(t)

    def table(self) -> dict[str, np.ndarray]:
        """Columns ``time, estimate, variance, lower, upper`` including the origin row at 0."""
        times = np.concatenate([[0.0], self.times])
        cols = {
            "time": times,
            "estimate": np.concatenate([[self.estimate.origin], self.estimate.values]),
            "variance": np.concatenate([[self.variance.origin], self.variance.values]),
        }
        for name in ("lower", "upper"):
            band = getattr(self, name)
            if band is None:
                cols[name] = np.full(times.size, np.nan)
            else:
                cols[name] = np.concatenate([[band.origin], band.values])
        return cols


class CumulativeHazardEstimate(PathEstimate):
    kind = "cumulative_hazard"


class SurvivalEstimate(PathEstimate):
    kind = "survival"


def _resolve_transition(panel: CountingPanel, from_state, to_state) -> tuple[int, int | None]:
    for label in (from_state, to_state):
        if label is not None and label not in panel.states:
            raise UnknownTransition(f"state {label!r} not in state space {panel.states}")
    if from_state is None:
        observed = panel.observed_transitions()
        sources = sorted({h for h, j in observed if to_state is None or j == to_state})
        if len(sources) != 1:
            raise UnknownTransition(f"cannot infer the origin state from observed transitions {observed}")
        from_state = sources[0]
    if to_state is not None and to_state == from_state:
        raise UnknownTransition(f"{from_state!r} -> {to_state!r} is not a transition")
    h = panel.states.index(from_state)
    j = None if to_state is None else panel.states.index(to_state)
    return h, j


def _counts(panel: CountingPanel, h: int, j: int | None, group):
    if group is None:
        dN, Y = panel.dN, panel.Y
    else:
        g = panel.group_index(group)
        dN, Y = panel.group_dN[g], panel.group_Y[g]
    d = dN[:, h, :].sum(axis=1) if j is None else dN[:, h, j]
    keep = d > 0
    return panel.event_times[keep], d[keep].astype(float), Y[keep, h].astype(float)


def nelson_aalen(panel: CountingPanel, from_state: str | None = None, to_state: str | None = None,
                 group=None) -> CumulativeHazardEstimate:
    """Cumulative transition intensity ``sum dN/Y`` with optional-variation variance ``sum dN/Y**2``.

    ``to_state=None`` pools all exits out of ``from_state``. With both omitted
    the panel must have a single origin state.
    """
    h, j = _resolve_transition(panel, from_state, to_state)
    times, d, Y = _counts(panel, h, j, group)
    A = np.cumsum(d / Y)
    var = np.cumsum(d / (Y * Y))
    to_label = None if j is None else panel.states[j]
    return CumulativeHazardEstimate(
        estimate=StepFunction(times, A, 0.0),
        variance=StepFunction(times, var, 0.0),
        n_at_risk=Y,
        n_events=d,
        transition=(panel.states[h], to_label),
        group=group,
    )


def product_integral(hazard: PathEstimate | StepFunction) -> StepFunction:
    """``prod (1 - dA)`` over the jumps of a cumulative hazard step function.

    For a Nelson-Aalen estimate the jumps are taken as ``dN/Y`` directly rather
    than as differences of the running sum, which avoids rounding drift.
    """
    if isinstance(hazard, PathEstimate):
        jumps = hazard.n_events / hazard.n_at_risk
        return StepFunction(hazard.times, np.cumprod(1.0 - jumps), 1.0)
    return StepFunction(hazard.jump_times, np.cumprod(1.0 - hazard.jumps), 1.0)


def kaplan_meier(panel: CountingPanel, group=None) -> SurvivalEstimate:
    """Product-limit survival estimate with its Greenwood-type variance.

    The variance is ``S(t)**2 * sum dN / (Y (Y - dN))``. A grid point where the
    whole risk set fails sends S to 0; that term is left out of the sum, so the
    variance is 0 from then on.
    """
    observed = panel.observed_transitions()
    if len(observed) > 1:
        raise NotSurvivalData(f"kaplan_meier needs one transition type, found {observed}")
    h, _ = _resolve_transition(panel, None, None) if observed else (0, None)
    times, d, Y = _counts(panel, h, None, group)
    S = np.cumprod(1.0 - d / Y)
    alive = Y > d
    terms = np.zeros_like(d)
    terms[alive] = d[alive] / (Y[alive] * (Y[alive] - d[alive]))
    var = S * S * np.cumsum(terms)
    return SurvivalEstimate(
        estimate=StepFunction(times, S, 1.0),
        variance=StepFunction(times, var, 0.0),
        n_at_risk=Y,
        n_events=d,
        transition=(panel.states[h], None),
        group=group,
    )


def _z(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise InputError(f"confidence level must lie in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2.0))


def _hazard_band(A: np.ndarray, var: np.ndarray, z: float, transform: str):
    se = np.sqrt(var)
    if transform == "linear":
        return np.maximum(A - z * se, 0.0), A + z * se
    if transform != "log":
        raise InputError(f"unknown transform {transform!r} for a cumulative hazard")
    lower = np.zeros_like(A)
    upper = np.zeros_like(A)
    pos = A > 0
    factor = np.exp(z * se[pos] / A[pos])
    lower[pos] = A[pos] / factor
    upper[pos] = A[pos] * factor
    return lower, upper


def _survival_band(S: np.ndarray, var: np.ndarray, z: float, transform: str):
    se = np.sqrt(var)
    if transform == "linear":
        return np.clip(S - z * se, 0.0, 1.0), np.clip(S + z * se, 0.0, 1.0)
    lower = S.copy()
    upper = S.copy()
    inner = (S > 0) & (S < 1)
    s = S[inner]
    if transform == "loglog":
        theta_se = se[inner] / (s * np.abs(np.log(s)))
        lower[inner] = s ** np.exp(z * theta_se)
        upper[inner] = s ** np.exp(-z * theta_se)
    elif transform == "log":
        factor = np.exp(z * se[inner] / s)
        lower[inner] = s / factor
        upper[inner] = np.minimum(s * factor, 1.0)
    else:
        raise InputError(f"unknown transform {transform!r} for a survival curve")
    return lower, upper


def confidence_interval(estimate: PathEstimate, level: float = 0.95, transform: str | None = None) -> PathEstimate:
    """Attach pointwise confidence limits.

    Cumulative hazards default to the log transform ``A exp(+-z se / A)`` and
    survival curves to the complementary log-log transform. ``transform="linear"``
    gives plain Wald limits clipped to the parameter range. Where ``A = 0`` the
    interval is ``[0, 0]``; where ``S`` is 0 or 1 it collapses onto ``S``.
    """
    z = _z(level)
    is_survival = isinstance(estimate, SurvivalEstimate)
    if transform is None:
        transform = "loglog" if is_survival else "log"
    band = _survival_band if is_survival else _hazard_band
    values = np.concatenate([[estimate.estimate.origin], estimate.estimate.values])
    var = np.concatenate([[estimate.variance.origin], estimate.variance.values])
    lo, hi = band(values, var, z, transform)
    times = estimate.times
    return replace(
        estimate,
        lower=StepFunction(times, lo[1:], lo[0]),
        upper=StepFunction(times, hi[1:], hi[0]),
        level=level,
        transform=transform,
    )
