"""Seeded Monte Carlo checks of the martingale structure behind the estimators.

Event histories are generated from piecewise-constant intensities, so the
cumulative hazard, its inverse and every compensator are available in closed
form and the simulated truth carries no quadrature error.

Randomness: each replicate gets a Philox stream keyed by
``SeedSequence(seed, spawn_key=stream)``; subject ``i`` always reads the same
fixed-size block of uniforms from that stream, so its draws do not depend on
how many subjects are simulated.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtri
from scipy.stats import kurtosis, skew

from .cox import accumulated_information, fit as cox_fit, martingale_residuals, risk_set_data, score_process
from .errors import EmptyData, EmptyStudy, InputError, InvalidSpec, MonotoneLikelihood
from .event_data import RecordSet, build_panel, concat_records
from .ksample import two_sample_test
from .multistate import aj_endpoint, cumulative_intensity_matrix
from .univariate import confidence_interval, kaplan_meier, nelson_aalen


# ------------------------------------------------------------------ hazards


@dataclass(frozen=True)
class PiecewiseConstantHazard:
    """Hazard equal to ``levels[i]`` on ``[breakpoints[i], breakpoints[i+1])``; the last piece runs to infinity."""

    breakpoints: tuple[float, ...] = (0.0,)
    levels: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        b = tuple(float(x) for x in np.atleast_1d(self.breakpoints))
        lv = tuple(float(x) for x in np.atleast_1d(self.levels))
        if len(b) != len(lv) or not b:
            raise InvalidSpec("breakpoints and levels must have the same nonzero length")
        if b[0] != 0.0 or any(y <= x for x, y in zip(b, b[1:])):
            raise InvalidSpec("breakpoints must start at 0 and increase strictly")
        if not all(np.isfinite(b)) or not all(np.isfinite(lv)) or min(lv) < 0:
            raise InvalidSpec("hazard levels must be finite and nonnegative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", lv)

    @classmethod
    def constant(cls, rate: float) -> "PiecewiseConstantHazard":
        return cls((0.0,), (rate,))

    @property
    def _b(self) -> np.ndarray:
        return np.asarray(self.breakpoints)

    @property
    def _lv(self) -> np.ndarray:
        return np.asarray(self.levels)

    @property
    def _cum_at_breaks(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(np.diff(self._b) * self._lv[:-1])])

    def hazard(self, t):
        idx = np.searchsorted(self._b, np.asarray(t, dtype=float), side="right") - 1
        return self._lv[np.maximum(idx, 0)]

    def cumulative(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        idx = np.searchsorted(self._b, t, side="right") - 1
        with np.errstate(invalid="ignore"):
            out = self._cum_at_breaks[idx] + self._lv[idx] * (t - self._b[idx])
        # 0 * inf on a zero last piece
        return np.where(np.isnan(out), self._cum_at_breaks[idx], out)

    def survival(self, t):
        return np.exp(-self.cumulative(t))

    def inverse(self, a):
        """Smallest ``t`` with ``cumulative(t) >= a``; ``inf`` when the total mass is below ``a``."""
        a = np.asarray(a, dtype=float)
        C = self._cum_at_breaks
        # piece h with C[h] < a <= C[h+1]; such a piece always has a positive level
        idx = np.maximum(np.searchsorted(C, a, side="left") - 1, 0)
        lv = self._lv[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self._b[idx] + (a - C[idx]) / lv
        t = np.where(lv > 0, t, np.where(a <= C[idx], self._b[idx], np.inf))
        return t

    def __add__(self, other: "PiecewiseConstantHazard") -> "PiecewiseConstantHazard":
        b = np.union1d(self._b, other._b)
        return PiecewiseConstantHazard(tuple(b), tuple(self.hazard(b) + other.hazard(b)))

    def scaled(self, factor: float) -> "PiecewiseConstantHazard":
        return PiecewiseConstantHazard(self.breakpoints, tuple(factor * x for x in self.levels))


@dataclass(frozen=True)
class HazardSpec:
    """Generating model: piecewise-constant transition intensities out of each state.

    ``beta`` multiplies every intensity by ``exp(beta'Z)`` with ``Z`` drawn per
    subject from ``covariate_dist`` (``normal``, ``bernoulli`` or ``uniform``).
    ``horizon`` is an administrative censoring time applied to everyone.
    """

    transitions: Mapping[tuple[str, str], PiecewiseConstantHazard]
    initial_state: str = "alive"
    beta: tuple[float, ...] = ()
    covariate_dist: str = "normal"
    horizon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "transitions", dict(self.transitions))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not self.transitions:
            raise InvalidSpec("at least one transition is required")
        for (h, j) in self.transitions:
            if h == j:
                raise InvalidSpec(f"self transition {h!r} -> {j!r}")
        if self.initial_state not in self.states:
            raise InvalidSpec(f"initial state {self.initial_state!r} has no transitions")
        if self.covariate_dist not in ("normal", "bernoulli", "uniform"):
            raise InvalidSpec(f"unknown covariate distribution {self.covariate_dist!r}")
        if self.horizon is not None and not self.horizon > 0:
            raise InvalidSpec("horizon must be positive")
        if self.horizon is None:
            for state in self.transient_states:
                if self.exit_hazard(state).levels[-1] <= 0:
                    raise InvalidSpec(f"state {state!r} may be occupied forever: give the last piece a positive level or set a horizon")

    @classmethod
    def survival(cls, hazard: PiecewiseConstantHazard | float, beta: Sequence[float] = (),
                 covariate_dist: str = "normal", horizon: float | None = None) -> "HazardSpec":
        if not isinstance(hazard, PiecewiseConstantHazard):
            hazard = PiecewiseConstantHazard.constant(hazard)
        return cls({("alive", "dead"): hazard}, "alive", tuple(beta), covariate_dist, horizon)

    @property
    def states(self) -> tuple[str, ...]:
        seen = [self.initial_state]
        for h, j in self.transitions:
            for s in (h, j):
                if s not in seen:
                    seen.append(s)
        return tuple(seen)

    @property
    def transient_states(self) -> tuple[str, ...]:
        return tuple(s for s in self.states if any(h == s for h, _ in self.transitions))

    @property
    def p(self) -> int:
        return len(self.beta)

    def exit_hazard(self, state: str) -> PiecewiseConstantHazard:
        out = None
        for (h, _), haz in self.transitions.items():
            if h == state:
                out = haz if out is None else out + haz
        return out if out is not None else PiecewiseConstantHazard.constant(0.0)

    def is_survival(self) -> bool:
        return len(self.transitions) == 1


@dataclass(frozen=True)
class CensoringSpec:
    """Observation scheme.

    * ``none``: observe until the event (or the hazard's horizon).
    * ``type1``: fixed censoring time(s) ``times`` (scalar or one per subject).
    * ``type2``: stop when ``r`` transitions have been observed.
    * ``random``: independent ``exponential(rate)`` or ``uniform(low, high)`` times.
    * ``dependent``: adversarial, NOT independent: with probability
      ``probability`` a subject is withdrawn shortly before its first event.
    """

    scheme: str = "none"
    times: float | tuple[float, ...] = np.inf
    r: int | None = None
    distribution: str = "exponential"
    rate: float = 1.0
    low: float = 0.0
    high: float = 1.0
    probability: float = 0.5

    def __post_init__(self):
        if self.scheme not in ("none", "type1", "type2", "random", "dependent"):
            raise InvalidSpec(f"unknown censoring scheme {self.scheme!r}")
        if self.scheme == "type2" and (self.r is None or self.r < 1):
            raise InvalidSpec("type2 censoring needs r >= 1")
        if self.scheme == "random":
            if self.distribution == "exponential" and not self.rate > 0:
                raise InvalidSpec("exponential censoring needs rate > 0")
            if self.distribution == "uniform" and not self.high > self.low >= 0:
                raise InvalidSpec("uniform censoring needs 0 <= low < high")
            if self.distribution not in ("exponential", "uniform"):
                raise InvalidSpec(f"unknown censoring distribution {self.distribution!r}")
        if self.scheme == "dependent" and not 0 <= self.probability <= 1:
            raise InvalidSpec("probability must lie in [0, 1]")
        if not isinstance(self.times, (int, float)):
            object.__setattr__(self, "times", tuple(float(c) for c in self.times))

    @property
    def independent(self) -> bool:
        return self.scheme != "dependent"

    def survival_fraction(self, t):
        """``P(C >= t)`` for the schemes where it is deterministic; ``nan`` otherwise."""
        t = np.asarray(t, dtype=float)
        if self.scheme == "none":
            return np.ones_like(t)
        if self.scheme == "type1" and isinstance(self.times, float | int):
            return (t <= self.times).astype(float)
        if self.scheme == "random":
            if self.distribution == "exponential":
                return np.exp(-self.rate * t)
            return np.clip((self.high - t) / (self.high - self.low), 0.0, 1.0)
        return np.full_like(t, np.nan)


NO_CENSORING = CensoringSpec()


# --------------------------------------------------------------- simulation

MAX_STEPS = 8


def _uniforms(seed: int, stream: Sequence[int], n: int, width: int) -> np.ndarray:
    key = np.random.SeedSequence(seed, spawn_key=tuple(int(s) for s in stream)).generate_state(2, np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(n * width).reshape(n, width)


def _covariates(u: np.ndarray, dist: str) -> np.ndarray:
    if dist == "normal":
        return ndtri(np.clip(u, 1e-300, None))
    if dist == "bernoulli":
        return (u < 0.5).astype(float)
    return u


def _censoring_times(censoring: CensoringSpec, U: np.ndarray, n: int, reps: int, horizon) -> np.ndarray:
    rows = U.shape[0]
    cens = np.full(rows, np.inf)
    if censoring.scheme == "type1":
        times = np.asarray(censoring.times, dtype=float)
        if times.ndim:
            if times.size < n:
                raise InvalidSpec("type1 censoring needs one time per subject")
            cens = np.tile(times[:n], reps)
        else:
            cens[:] = times
    elif censoring.scheme == "random":
        if censoring.distribution == "exponential":
            cens = -np.log1p(-U[:, 0]) / censoring.rate
        else:
            cens = censoring.low + (censoring.high - censoring.low) * U[:, 0]
    if horizon is not None:
        cens = np.minimum(cens, horizon)
    return cens


def simulate_batch(n: int, hazard: HazardSpec, censoring: CensoringSpec | None = None, seed: int = 0,
                   streams: Sequence[Sequence[int]] = ((),), group=None, id_offset: int = 0,
                   max_steps: int = MAX_STEPS) -> list[RecordSet]:
    """Simulate one record set per stream in a single vectorized pass.

    Every operation is elementwise per subject (type II censoring is applied per
    stream afterwards), so each result is identical to ``simulate`` with that
    stream.
    """
    if n < 1:
        raise InvalidSpec("n must be at least 1")
    censoring = censoring or NO_CENSORING
    if censoring.scheme == "type2" and censoring.r > n:
        raise InvalidSpec(f"type2 censoring needs r <= n, got r={censoring.r}, n={n}")
    states = hazard.states
    p = hazard.p
    reps = len(streams)
    width = 2 + p + 2 * max_steps
    U = np.concatenate([_uniforms(seed, s, n, width) for s in streams], axis=0)
    rows = U.shape[0]

    Z = _covariates(U[:, 2 : 2 + p], hazard.covariate_dist) if p else np.empty((rows, 0))
    mult = np.exp(Z @ np.asarray(hazard.beta)) if p else np.ones(rows)
    cens = _censoring_times(censoring, U, n, reps, hazard.horizon)

    exit_hazards = {s: hazard.exit_hazard(s) for s in hazard.transient_states}
    outgoing = {s: [(states.index(j), haz) for (h, j), haz in hazard.transitions.items() if h == s]
                for s in hazard.transient_states}

    state = np.zeros(rows, dtype=np.int64)
    clock = np.zeros(rows)
    active = np.ones(rows, dtype=bool)
    parts = []   # (row, entry, exit, from, to)

    for step in range(max_steps + 1):
        if not active.any():
            break
        if step == max_steps:
            raise InvalidSpec(f"some subjects made more than {max_steps} transitions; raise max_steps")
        u_time = U[:, 2 + p + 2 * step]
        u_dest = U[:, 3 + p + 2 * step]
        for code, label in enumerate(states):
            sel = np.flatnonzero(active & (state == code))
            if sel.size == 0:
                continue
            haz = exit_hazards.get(label)
            if haz is None:  # absorbing
                active[sel] = False
                continue
            start = clock[sel]
            t_exit = haz.inverse(haz.cumulative(start) - np.log1p(-u_time[sel]) / mult[sel])
            if step == 0 and censoring.scheme == "dependent":
                withdraw = (U[sel, 1] < censoring.probability) & np.isfinite(t_exit)
                early = start + (t_exit - start) * (0.9 + 0.1 * U[sel, 0])
                cens[sel] = np.where(withdraw, np.minimum(cens[sel], early), cens[sel])
            c_sel = cens[sel]
            censored = t_exit >= c_sel
            if np.any(censored & np.isinf(c_sel)):
                raise InvalidSpec("a subject is never censored and never leaves its state")
            cs = sel[censored]
            keep = cens[cs] > clock[cs]
            cs = cs[keep]
            parts.append((cs, clock[cs], cens[cs], np.full(cs.size, code), np.full(cs.size, -1)))
            active[sel[censored]] = False

            moved = sel[~censored]
            t_mv = t_exit[~censored]
            if len(outgoing[label]) == 1:
                dest = np.full(moved.size, outgoing[label][0][0])
            else:
                cum = np.cumsum(np.column_stack([h.hazard(t_mv) for _, h in outgoing[label]]), axis=1)
                pick = np.minimum(np.sum(u_dest[moved, None] * cum[:, -1:] >= cum, axis=1), cum.shape[1] - 1)
                dest = np.array([j for j, _ in outgoing[label]])[pick]
            parts.append((moved, clock[moved], t_mv, np.full(moved.size, code), dest))
            clock[moved] = t_mv
            state[moved] = dest

    row, entry, exit_, frm, to = (np.concatenate(col) for col in zip(*parts))
    order = np.lexsort((entry, row))
    row, entry, exit_, frm, to = row[order], entry[order], exit_[order], frm[order].astype(np.int64), to[order].astype(np.int64)
    bounds = np.searchsorted(row, np.arange(reps + 1) * n)
    out = []
    for r in range(reps):
        sl = slice(bounds[r], bounds[r + 1])
        sid = row[sl] - r * n
        e0, e1, f, t = entry[sl], exit_[sl], frm[sl], to[sl]
        if censoring.scheme == "type2":
            events = np.sort(e1[t >= 0])
            if events.size >= censoring.r:
                cutoff = events[censoring.r - 1]
                keep = e0 < cutoff
                sid, e0, e1, f, t = sid[keep], e0[keep], e1[keep], f[keep], t[keep]
                late = e1 > cutoff
                e1 = np.where(late, cutoff, e1)
                t = np.where(late, -1, t)
        out.append(RecordSet(
            ids=(sid + id_offset).astype(object),
            entry=e0.copy(), exit=e1.copy(), from_code=f.copy(), to_code=t.copy(),
            group_code=np.zeros(sid.size, dtype=np.int64),
            covariates=Z[row[sl]],
            states=states, groups=(group,),
            covariate_names=tuple(f"z{j + 1}" for j in range(p)),
        ))
    return out


def simulate(n: int, hazard: HazardSpec, censoring: CensoringSpec | None = None, seed: int = 0,
             stream: Sequence[int] = (), group=None, id_offset: int = 0,
             max_steps: int = MAX_STEPS) -> RecordSet:
    """Generate ``n`` subjects' event histories.

    Transition times come from inverting the (covariate-scaled) cumulative exit
    hazard of the current state; the destination is drawn with probabilities
    proportional to the intensities at the transition time. Subject ``i`` uses
    only its own block of uniforms from the ``(seed, stream)`` sequence.
    """
    return simulate_batch(n, hazard, censoring, seed, (tuple(stream),), group, id_offset, max_steps)[0]


def replicate_records(n: int, hazard: HazardSpec, censoring: CensoringSpec | None, seed: int,
                      streams: Sequence[Sequence[int]], batch: int = 256, **kwargs):
    """Yield the record sets for ``streams`` in order, simulating ``batch`` at a time."""
    for lo in range(0, len(streams), batch):
        yield from simulate_batch(n, hazard, censoring, seed, streams[lo : lo + batch], **kwargs)



# ---------------------------------------------------------- martingale paths


def _multiplier(records: RecordSet, hazard: HazardSpec) -> np.ndarray:
    if hazard.p == 0:
        return np.ones(len(records))
    return np.exp(records.covariates @ np.asarray(hazard.beta))


def martingale_paths(records: RecordSet, hazard: HazardSpec, grid: Sequence[float]):
    """Pooled ``N(t)``, compensator ``int lambda`` and optional variation ``[M](t)`` on ``grid``.

    ``N`` counts all observed transitions; the compensator integrates each
    record's true total exit intensity over its at-risk interval.
    """
    grid = np.asarray(grid, dtype=float)
    mult = _multiplier(records, hazard)
    comp = np.zeros(grid.size)
    for code, label in enumerate(records.states):
        sel = records.from_code == code
        if not sel.any() or label not in hazard.transient_states:
            continue
        haz = hazard.exit_hazard(label)
        upper = np.minimum(grid[:, None], records.exit[sel][None, :])
        lower = records.entry[sel][None, :]
        inc = np.where(upper > lower, haz.cumulative(upper) - haz.cumulative(lower), 0.0)
        comp += inc @ mult[sel]
    ev_times, counts = np.unique(records.exit[records.to_code >= 0], return_counts=True)
    upto = np.searchsorted(ev_times, grid, side="right")
    cum_n = np.concatenate([[0], np.cumsum(counts)])
    cum_sq = np.concatenate([[0], np.cumsum(counts.astype(float) ** 2)])
    N = cum_n[upto].astype(float)
    return N, comp, cum_sq[upto]


@dataclass(frozen=True, eq=False)
class ReplicateReport:
    grid: np.ndarray
    M: np.ndarray = field(repr=False)             # (replicates, grid)
    compensator: np.ndarray = field(repr=False)
    optional: np.ndarray = field(repr=False)
    flags: list
    min_compensator: float

    @property
    def replicates(self) -> int:
        return self.M.shape[0]

    @property
    def mean_M(self) -> np.ndarray:
        return self.M.mean(axis=0)

    @property
    def se_M(self) -> np.ndarray:
        return self.M.std(axis=0, ddof=1) / np.sqrt(self.replicates)

    @property
    def var_M(self) -> np.ndarray:
        return self.M.var(axis=0, ddof=1)

    @property
    def mean_predictable(self) -> np.ndarray:
        return self.compensator.mean(axis=0)

    @property
    def mean_optional(self) -> np.ndarray:
        return self.optional.mean(axis=0)

    @property
    def variance_ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.var_M / self.mean_predictable

    def to_dict(self) -> dict:
        return {
            "replicates": self.replicates,
            "grid": self.grid.tolist(),
            "mean_M": self.mean_M.tolist(),
            "se_M": self.se_M.tolist(),
            "var_M": self.var_M.tolist(),
            "mean_predictable_variation": self.mean_predictable.tolist(),
            "mean_optional_variation": self.mean_optional.tolist(),
            "variance_ratio": [None if not np.isfinite(x) else float(x) for x in self.variance_ratio],
            "flags": self.flags,
        }


def martingale_check(hazard: HazardSpec, censoring: CensoringSpec | None, n: int, grid: Sequence[float],
                     replicates: int, seed: int = 0, sigma: float = 4.0,
                     variance_band: tuple[float, float] = (0.9, 1.1),
                     min_compensator: float = 5.0) -> ReplicateReport:
    """Simulate replicates and compare ``M = N - compensator`` with its claimed moments.

    A grid point is flagged when ``|mean M|`` exceeds ``sigma`` Monte Carlo
    standard errors, or (where the mean predictable variation is at least
    ``min_compensator``) when ``var M / mean <M>`` leaves ``variance_band``.
    """
    if replicates < 2:
        raise EmptyStudy("martingale_check needs at least two replicates")
    grid = np.asarray(grid, dtype=float)
    M = np.empty((replicates, grid.size))
    comp = np.empty_like(M)
    opt = np.empty_like(M)
    streams = [(r,) for r in range(replicates)]
    for r, records in enumerate(replicate_records(n, hazard, censoring, seed, streams)):
        N, c, o = martingale_paths(records, hazard, grid)
        M[r], comp[r], opt[r] = N - c, c, o
    report = ReplicateReport(grid=grid, M=M, compensator=comp, optional=opt, flags=[], min_compensator=min_compensator)
    mean, se, ratio = report.mean_M, report.se_M, report.variance_ratio
    for i, t in enumerate(grid):
        if se[i] > 0 and abs(mean[i]) > sigma * se[i]:
            report.flags.append({"time": float(t), "reason": "mean", "value": float(mean[i] / se[i])})
        if report.mean_predictable[i] >= min_compensator and not variance_band[0] <= ratio[i] <= variance_band[1]:
            report.flags.append({"time": float(t), "reason": "variance", "value": float(ratio[i])})
    return report


# ------------------------------------------------------------------- CLT


def limit_variance(hazard: HazardSpec, censoring: CensoringSpec | None, t: float) -> float:
    """``int_0^t alpha / y`` with ``y(s) = P(at risk at s)``, for covariate-free survival models.

    This is the variance of the limiting Gaussian martingale of
    ``sqrt(n) (A_hat - A)``; ``nan`` where ``y`` is not deterministic.
    """
    censoring = censoring or NO_CENSORING
    if not hazard.is_survival() or hazard.p:
        return float("nan")
    haz = hazard.exit_hazard(hazard.initial_state)
    if np.isnan(censoring.survival_fraction(0.0)):
        return float("nan")
    horizon = hazard.horizon if hazard.horizon is not None else np.inf
    upper = min(t, horizon)

    def integrand(s):
        y = float(haz.survival(s) * censoring.survival_fraction(s))
        return float(haz.hazard(s)) / y if y > 0 else np.inf

    points = [b for b in haz.breakpoints if 0 < b < upper]
    val, _ = integrate.quad(integrand, 0.0, upper, points=points or None, limit=200, epsabs=1e-12, epsrel=1e-10)
    return float(val)


@dataclass(frozen=True, eq=False)
class CLTReport:
    estimator: str
    fixed_times: np.ndarray
    n_sequence: tuple[int, ...]
    errors: dict = field(repr=False)        # n -> (replicates, len(fixed_times)) scaled errors
    max_jumps: dict = field(repr=False)     # n -> (replicates,) max jump of the scaled error process
    limit_variances: dict                   # n -> (len(fixed_times),), may hold nan

    def summary(self, n: int) -> dict:
        e = self.errors[n]
        return {
            "n": n,
            "mean_max_jump": float(self.max_jumps[n].mean()),
            "mean": e.mean(axis=0).tolist(),
            "variance": e.var(axis=0, ddof=1).tolist(),
            "limit_variance": [None if not np.isfinite(v) else float(v) for v in self.limit_variances[n]],
            "skewness": skew(e, axis=0).tolist(),
            "excess_kurtosis": kurtosis(e, axis=0, fisher=True).tolist(),
        }

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "fixed_times": self.fixed_times.tolist(),
            "by_n": [self.summary(n) for n in self.n_sequence],
        }

    def jump_ratio(self, small: int, large: int) -> float:
        return float(self.max_jumps[small].mean() / self.max_jumps[large].mean())


def _survival_panel(records: RecordSet, hazard: HazardSpec):
    return build_panel(records)


ESTIMATOR_ALIASES = {"km": "kaplan_meier", "na": "nelson_aalen"}


def clt_check(estimator: str, hazard: HazardSpec, censoring: CensoringSpec | None, n_sequence: Sequence[int],
              replicates: int, fixed_times: Sequence[float], seed: int = 0) -> CLTReport:
    """Scaled estimation errors at fixed times plus the largest jump of the scaled error process.

    ``estimator``: ``nelson_aalen`` (``sqrt(n)(A_hat - A)``), ``kaplan_meier``
    (alias ``km``; ``sqrt(n)(S_hat - S)``) or ``score`` (``U_t(beta_true)/sqrt(n)``, first
    coordinate). The max jump is taken over ``(0, max(fixed_times)]``.
    """
    if replicates < 2:
        raise EmptyStudy("clt_check needs at least two replicates")
    estimator = ESTIMATOR_ALIASES.get(estimator, estimator)
    if estimator not in ("nelson_aalen", "kaplan_meier", "score"):
        raise InputError(f"unknown estimator {estimator!r}")
    if estimator == "score" and hazard.p == 0:
        raise InvalidSpec("the score check needs covariate effects (beta)")
    fixed = np.asarray(fixed_times, dtype=float)
    t_max = float(fixed.max())
    haz = hazard.exit_hazard(hazard.initial_state)
    A_true = haz.cumulative(fixed)
    errors, jumps, limits = {}, {}, {}
    for n in n_sequence:
        e = np.empty((replicates, fixed.size))
        mj = np.empty(replicates)
        info = np.zeros(fixed.size)
        root = np.sqrt(n)
        streams = [(n, r) for r in range(replicates)]
        for r, records in enumerate(replicate_records(n, hazard, censoring, seed, streams)):
            if estimator == "score":
                data = risk_set_data(records, from_state=hazard.initial_state)
                proc = score_process(data, hazard.beta)
                e[r] = proc(fixed)[:, 0] / root
                steps = np.abs(np.diff(np.vstack([proc.path.origin, proc.path.values]), axis=0)[:, 0])
                window = proc.times <= t_max
                mj[r] = steps[window].max() / root if window.any() else 0.0
                info += accumulated_information(data, hazard.beta)(fixed)[:, 0, 0] / n
                continue
            try:
                panel = build_panel(records)
            except EmptyData:
                e[r] = -root * A_true if estimator == "nelson_aalen" else 0.0
                mj[r] = 0.0
                continue
            if estimator == "nelson_aalen":
                est = nelson_aalen(panel, from_state=hazard.initial_state)
                e[r] = root * (est(fixed) - A_true)
                jump = est.estimate.jumps
            else:
                est = kaplan_meier(panel)
                e[r] = root * (est(fixed) - np.exp(-A_true))
                jump = -est.estimate.jumps
            window = est.times <= t_max
            mj[r] = root * jump[window].max() if window.any() else 0.0
        errors[n], jumps[n] = e, mj
        if estimator == "score":
            limits[n] = info / replicates
        else:
            base = np.array([limit_variance(hazard, censoring, t) for t in fixed])
            limits[n] = base if estimator == "nelson_aalen" else base * np.exp(-2 * A_true)
    return CLTReport(estimator=estimator, fixed_times=fixed, n_sequence=tuple(n_sequence),
                     errors=errors, max_jumps=jumps, limit_variances=limits)


# --------------------------------------------------------------- coverage


@dataclass(frozen=True)
class CoverageReport:
    estimator: str
    n: int
    time: float
    level: float
    transform: str
    replicates: int
    covered: int
    truth: float
    mean_estimate: float

    @property
    def coverage(self) -> float:
        return self.covered / self.replicates

    @property
    def se(self) -> float:
        c = self.coverage
        return float(np.sqrt(c * (1 - c) / self.replicates))

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator, "n": self.n, "time": self.time, "level": self.level,
            "transform": self.transform, "replicates": self.replicates, "covered": self.covered,
            "coverage": self.coverage, "se": self.se, "truth": self.truth, "mean_estimate": self.mean_estimate,
        }


def coverage_check(estimator: str, hazard: HazardSpec, censoring: CensoringSpec | None, n: int, time: float,
                   replicates: int, level: float = 0.95, seed: int = 0, transform: str | None = None) -> CoverageReport:
    """Fraction of replicates whose pointwise interval at ``time`` covers the true value."""
    if replicates <= 0:
        raise EmptyStudy("coverage_check needs at least one replicate")
    if not 0 < level < 1:
        raise InputError("level must lie in (0, 1)")
    estimator = ESTIMATOR_ALIASES.get(estimator, estimator)
    if estimator not in ("nelson_aalen", "kaplan_meier"):
        raise InputError(f"unknown estimator {estimator!r}")
    if hazard.p:
        raise InvalidSpec("coverage of marginal estimators needs a covariate-free hazard")
    A = float(hazard.exit_hazard(hazard.initial_state).cumulative(time))
    truth = A if estimator == "nelson_aalen" else float(np.exp(-A))
    covered = 0
    total = 0.0
    used = transform
    for records in replicate_records(n, hazard, censoring, seed, [(r,) for r in range(replicates)]):
        panel = build_panel(records)
        est = nelson_aalen(panel, from_state=hazard.initial_state) if estimator == "nelson_aalen" else kaplan_meier(panel)
        band = confidence_interval(est, level, transform)
        used = band.transform
        lo, hi = float(band.lower(time)), float(band.upper(time))
        covered += lo <= truth <= hi
        total += float(est(time))
    return CoverageReport(estimator=estimator, n=n, time=float(time), level=level, transform=used,
                          replicates=replicates, covered=int(covered), truth=truth, mean_estimate=total / replicates)


# ------------------------------------------------- two-sample calibration


@dataclass(frozen=True, eq=False)
class CalibrationReport:
    weights: str
    level: float
    U: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    p_values: np.ndarray = field(repr=False)

    @property
    def replicates(self) -> int:
        return self.U.size

    @property
    def rejection_rate(self) -> float:
        return float(np.mean(self.p_values < self.level))

    @property
    def se(self) -> float:
        r = self.rejection_rate
        return float(np.sqrt(r * (1 - r) / self.replicates))

    def to_dict(self) -> dict:
        return {
            "weights": self.weights, "level": self.level, "replicates": self.replicates,
            "rejection_rate": self.rejection_rate, "se": self.se,
            "mean_U": float(self.U.mean()), "var_U": float(self.U.var(ddof=1)), "mean_V": float(self.V.mean()),
        }


def two_sample_calibration(hazard_a: HazardSpec, hazard_b: HazardSpec, censoring: CensoringSpec | None,
                           n_per_group: int, replicates: int, seed: int = 0, level: float = 0.05,
                           weights: str = "logrank") -> CalibrationReport:
    """Rejection rate of the two-sample test over simulated pairs of groups."""
    if replicates <= 0:
        raise EmptyStudy("two_sample_calibration needs at least one replicate")
    U = np.empty(replicates)
    V = np.empty(replicates)
    pv = np.empty(replicates)
    group_a = replicate_records(n_per_group, hazard_a, censoring, seed, [(r, 0) for r in range(replicates)], group="a")
    group_b = replicate_records(n_per_group, hazard_b, censoring, seed, [(r, 1) for r in range(replicates)],
                                group="b", id_offset=n_per_group)
    for r, (a, b) in enumerate(zip(group_a, group_b)):
        res = two_sample_test(build_panel(concat_records([a, b])), weights=weights)
        U[r], V[r], pv[r] = res.U[0], res.V[0, 0], res.p_value
    return CalibrationReport(weights=weights, level=level, U=U, V=V, p_values=pv)


# ------------------------------------------------------------ Cox studies


@dataclass(frozen=True, eq=False)
class CoxStudyReport:
    beta_true: np.ndarray
    beta: np.ndarray = field(repr=False)         # (replicates, p)
    se: np.ndarray = field(repr=False)
    residual_sums: np.ndarray = field(repr=False)
    failures: int
    sigma: float

    @property
    def within(self) -> np.ndarray:
        """Per coordinate, fraction of replicates with ``|beta_hat - beta| <= sigma * se``."""
        return np.mean(np.abs(self.beta - self.beta_true) <= self.sigma * self.se, axis=0)

    def to_dict(self) -> dict:
        return {
            "beta_true": self.beta_true.tolist(),
            "replicates": int(self.beta.shape[0]),
            "mean_beta": self.beta.mean(axis=0).tolist(),
            "empirical_sd": self.beta.std(axis=0, ddof=1).tolist(),
            "mean_se": self.se.mean(axis=0).tolist(),
            "within_sigma": self.within.tolist(),
            "sigma": self.sigma,
            "max_abs_residual_sum": float(np.max(np.abs(self.residual_sums))),
            "failures": self.failures,
        }


def cox_consistency(hazard: HazardSpec, censoring: CensoringSpec | None, n: int, replicates: int,
                    seed: int = 0, sigma: float = 3.0) -> CoxStudyReport:
    """Fit the Cox model to simulated data and record estimates, standard errors and residual sums."""
    if replicates <= 0:
        raise EmptyStudy("cox_consistency needs at least one replicate")
    if hazard.p == 0:
        raise InvalidSpec("cox_consistency needs covariate effects (beta)")
    betas, ses, sums = [], [], []
    failures = 0
    for records in replicate_records(n, hazard, censoring, seed, [(r,) for r in range(replicates)]):
        try:
            res = cox_fit(records, from_state=hazard.initial_state)
        except MonotoneLikelihood:
            failures += 1
            continue
        betas.append(res.beta)
        ses.append(res.se)
        sums.append(martingale_residuals(res).final.sum())
    p = hazard.p
    return CoxStudyReport(
        beta_true=np.asarray(hazard.beta),
        beta=np.asarray(betas).reshape(-1, p),
        se=np.asarray(ses).reshape(-1, p),
        residual_sums=np.asarray(sums),
        failures=failures,
        sigma=sigma,
    )


# -------------------------------------------- Aalen-Johansen covariance


@dataclass(frozen=True, eq=False)
class AJVarianceReport:
    from_state: str
    to_state: str
    s: float
    t: float
    estimates: np.ndarray = field(repr=False)
    plugin: np.ndarray = field(repr=False)

    @property
    def empirical_variance(self) -> float:
        return float(self.estimates.var(ddof=1))

    @property
    def mean_plugin(self) -> float:
        return float(self.plugin.mean())

    @property
    def difference_se(self) -> float:
        """MC standard error of ``mean plug-in - empirical variance`` (paired per replicate)."""
        dev = (self.estimates - self.estimates.mean()) ** 2
        return float(np.std(self.plugin - dev, ddof=1) / np.sqrt(self.estimates.size))

    @property
    def z(self) -> float:
        return (self.mean_plugin - self.empirical_variance) / self.difference_se

    def to_dict(self) -> dict:
        return {
            "transition": [self.from_state, self.to_state], "s": self.s, "t": self.t,
            "replicates": int(self.estimates.size),
            "mean_estimate": float(self.estimates.mean()),
            "empirical_variance": self.empirical_variance,
            "mean_plugin_variance": self.mean_plugin,
            "difference_se": self.difference_se,
            "z": self.z,
        }


def aj_variance_check(hazard: HazardSpec, censoring: CensoringSpec | None, n: int, from_state: str, to_state: str,
                      s: float, t: float, replicates: int, seed: int = 0) -> AJVarianceReport:
    """Compare the plug-in variance of one ``P_hat(s, t)`` entry with its Monte Carlo variance."""
    if replicates < 2:
        raise EmptyStudy("aj_variance_check needs at least two replicates")
    states = hazard.states
    h, j = states.index(from_state), states.index(to_state)
    k = len(states)
    est = np.empty(replicates)
    var = np.empty(replicates)
    for r, records in enumerate(replicate_records(n, hazard, censoring, seed, [(r,) for r in range(replicates)])):
        try:
            panel = build_panel(records, state_space=states)
        except EmptyData:
            est[r], var[r] = float(h == j), 0.0
            continue
        inten = cumulative_intensity_matrix(panel)
        P, C = aj_endpoint(inten, s, t)
        est[r], var[r] = P[h, j], C[h * k + j, h * k + j]
    return AJVarianceReport(from_state=from_state, to_state=to_state, s=float(s), t=float(t),
                            estimates=est, plugin=var)


# ----------------------------------------------------------- study configs

STUDIES = ("martingale", "clt", "coverage", "calibration", "cox", "aj_variance")


def _piecewise(cfg: Mapping) -> PiecewiseConstantHazard:
    levels = cfg.get("levels", cfg.get("rate"))
    if levels is None:
        raise InvalidSpec("a hazard needs `levels` (or a constant `rate`)")
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    breaks = cfg.get("breakpoints", np.arange(levels.size) if levels.size == 1 else None)
    if breaks is None:
        raise InvalidSpec("piecewise hazards need `breakpoints`")
    return PiecewiseConstantHazard(tuple(np.atleast_1d(breaks)), tuple(levels))


def hazard_from_config(cfg: Mapping) -> HazardSpec:
    """Build a :class:`HazardSpec` from a mapping.

    Survival models give ``levels`` (and ``breakpoints``) directly; multi-state
    models list ``transitions`` as ``{from, to, levels, breakpoints}`` items plus
    ``initial_state``. ``beta``, ``covariate_dist`` and ``horizon`` are optional.
    """
    if not isinstance(cfg, Mapping):
        raise InvalidSpec("hazard must be a mapping")
    extra = dict(beta=tuple(cfg.get("beta", ())), covariate_dist=cfg.get("covariate_dist", "normal"),
                 horizon=cfg.get("horizon"))
    if "transitions" in cfg:
        trans = {}
        for item in cfg["transitions"]:
            key = (str(item["from"]), str(item["to"]))
            if key in trans:
                raise InvalidSpec(f"duplicate transition {key}")
            trans[key] = _piecewise(item)
        initial = str(cfg.get("initial_state", next(iter(trans))[0]))
        return HazardSpec(trans, initial, **extra)
    return HazardSpec({("alive", "dead"): _piecewise(cfg)}, "alive", **extra)


def censoring_from_config(cfg: Mapping | None) -> CensoringSpec:
    if cfg is None:
        return NO_CENSORING
    if not isinstance(cfg, Mapping):
        raise InvalidSpec("censoring must be a mapping")
    known = {f for f in CensoringSpec.__dataclass_fields__}
    unknown = set(cfg) - known
    if unknown:
        raise InvalidSpec(f"unknown censoring keys {sorted(unknown)}")
    return CensoringSpec(**cfg)


def _require(cfg: Mapping, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise InvalidSpec(f"study config is missing {missing}")
    return [cfg[k] for k in keys]


def run_study(cfg: Mapping):
    """Run the study described by ``cfg`` and return its report object."""
    kind = cfg.get("study")
    if kind not in STUDIES:
        raise InvalidSpec(f"`study` must be one of {STUDIES}, got {kind!r}")
    seed = int(cfg.get("seed", 0))
    hazard = hazard_from_config(_require(cfg, "hazard")[0])
    censoring = censoring_from_config(cfg.get("censoring"))
    replicates = int(_require(cfg, "replicates")[0])
    if kind == "martingale":
        n, grid = _require(cfg, "n", "grid")
        band = tuple(cfg.get("variance_band", (0.9, 1.1)))
        return martingale_check(hazard, censoring, int(n), grid, replicates, seed,
                                sigma=float(cfg.get("sigma", 4.0)), variance_band=band,
                                min_compensator=float(cfg.get("min_compensator", 5.0)))
    if kind == "clt":
        est, ns, times = _require(cfg, "estimator", "n_sequence", "fixed_times")
        return clt_check(est, hazard, censoring, [int(x) for x in ns], replicates, times, seed)
    if kind == "coverage":
        est, n, t = _require(cfg, "estimator", "n", "time")
        return coverage_check(est, hazard, censoring, int(n), float(t), replicates,
                              float(cfg.get("level", 0.95)), seed, cfg.get("transform"))
    if kind == "calibration":
        hazard_b = hazard_from_config(cfg.get("hazard_b", cfg["hazard"]))
        (n,) = _require(cfg, "n_per_group")
        return two_sample_calibration(hazard, hazard_b, censoring, int(n), replicates, seed,
                                      float(cfg.get("level", 0.05)), cfg.get("weights", "logrank"))
    if kind == "cox":
        (n,) = _require(cfg, "n")
        return cox_consistency(hazard, censoring, int(n), replicates, seed, float(cfg.get("sigma", 3.0)))
    n, frm, to, t = _require(cfg, "n", "from_state", "to_state", "t")
    return aj_variance_check(hazard, censoring, int(n), str(frm), str(to), float(cfg.get("s", 0.0)),
                             float(t), replicates, seed)
