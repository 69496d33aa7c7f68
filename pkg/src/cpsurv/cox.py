"""Cox regression: partial likelihood, Newton-Raphson fit, Breslow baseline,
score process and martingale residuals.

Risk sets follow the ``(entry, exit]`` convention of :mod:`cpsurv.event_data`,
so time-dependent covariates are given as several records per subject, each
carrying the covariate value valid on its interval. Tied event times use
Breslow's approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import (
    EmptyData,
    InputError,
    MonotoneLikelihood,
    NonFiniteInput,
    SingularInformation,
    UnknownTransition,
)
from .event_data import CountingPanel, RecordSet
from .stepfun import StepFunction


@dataclass(frozen=True, eq=False)
class RiskSetData:
    """Records at risk for one transition, sorted for cumulative risk-set sums."""

    times: np.ndarray         # distinct event times
    d: np.ndarray             # events per time
    z_events: np.ndarray      # summed covariates of the events at each time, (m, p)
    Z: np.ndarray             # covariates of records at risk, (r, p)
    entry: np.ndarray
    exit: np.ndarray
    event: np.ndarray         # bool per record
    subject: np.ndarray       # subject index per record
    subject_ids: np.ndarray
    covariate_names: tuple[str, ...]
    _exit_order: np.ndarray = field(repr=False)
    _n_exit_ge: np.ndarray = field(repr=False)
    _entry_order: np.ndarray = field(repr=False)
    _n_entry_ge: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.d.sum())


def risk_set_data(data: RecordSet | CountingPanel, from_state: str | None = None,
                  to_state: str | None = None) -> RiskSetData:
    records = data.records if isinstance(data, CountingPanel) else data
    states = records.states
    for label in (from_state, to_state):
        if label is not None and label not in states:
            raise UnknownTransition(f"state {label!r} not in {states}")
    events_all = records.to_code >= 0
    if to_state is not None:
        events_all &= records.to_code == states.index(to_state)
    if from_state is None:
        sources = np.unique(records.from_code[events_all])
        if sources.size != 1:
            raise UnknownTransition("cannot infer the origin state; pass from_state")
        h = int(sources[0])
    else:
        h = states.index(from_state)
    keep = records.from_code == h
    Z = records.covariates[keep]
    if not np.all(np.isfinite(Z)):
        raise NonFiniteInput("covariates must be finite")
    entry = records.entry[keep]
    exit_ = records.exit[keep]
    event = events_all[keep]
    if not event.any():
        raise EmptyData("no events for this transition")
    subject_ids, subject = np.unique(records.ids[keep].astype(str), return_inverse=True)

    times, inv = np.unique(exit_[event], return_inverse=True)
    m = times.size
    p = Z.shape[1]
    d = np.bincount(inv, minlength=m).astype(float)
    z_events = np.zeros((m, p))
    for col in range(p):
        z_events[:, col] = np.bincount(inv, weights=Z[event, col], minlength=m)

    r = entry.size
    exit_order = np.argsort(-exit_, kind="stable")
    n_exit_ge = r - np.searchsorted(np.sort(exit_), times, side="left")
    entry_order = np.argsort(-entry, kind="stable")
    n_entry_ge = r - np.searchsorted(np.sort(entry), times, side="left")
    return RiskSetData(
        times=times, d=d, z_events=z_events, Z=Z, entry=entry, exit=exit_, event=event,
        subject=subject, subject_ids=subject_ids, covariate_names=records.covariate_names,
        _exit_order=exit_order, _n_exit_ge=n_exit_ge, _entry_order=entry_order, _n_entry_ge=n_entry_ge,
    )


def _risk_sum(data: RiskSetData, values: np.ndarray) -> np.ndarray:
    """Sum of ``values`` (first axis = records) over each event time's risk set."""
    def tail_sums(order, counts):
        cs = np.cumsum(values[order], axis=0)
        cs = np.concatenate([np.zeros((1,) + values.shape[1:]), cs], axis=0)
        return cs[counts]
    return tail_sums(data._exit_order, data._n_exit_ge) - tail_sums(data._entry_order, data._n_entry_ge)


def _linear_predictor(data: RiskSetData, beta: np.ndarray):
    eta = data.Z @ beta
    shift = float(eta.max()) if eta.size else 0.0
    return eta, shift, np.exp(eta - shift)


def _as_beta(beta, p: int) -> np.ndarray:
    beta = np.zeros(p) if beta is None else np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != p:
        raise InputError(f"beta has {beta.size} entries, model has {p} covariates")
    if not np.all(np.isfinite(beta)):
        raise NonFiniteInput("beta must be finite")
    return beta


def _evaluate(data: RiskSetData, beta: np.ndarray, order: int = 2):
    eta, shift, w = _linear_predictor(data, beta)
    S0 = _risk_sum(data, w)
    loglik = float(np.sum(data.z_events @ beta - data.d * (shift + np.log(S0))))
    if order == 0:
        return loglik, None, None
    wZ = w[:, None] * data.Z
    S1 = _risk_sum(data, wZ)
    mean = S1 / S0[:, None]
    score = np.sum(data.z_events - data.d[:, None] * mean, axis=0)
    if order == 1:
        return loglik, score, None
    S2 = _risk_sum(data, wZ[:, :, None] * data.Z[:, None, :])
    info = np.einsum("i,ijk->jk", data.d, S2 / S0[:, None, None] - mean[:, :, None] * mean[:, None, :])
    return loglik, score, 0.5 * (info + info.T)


def partial_loglik(data: RecordSet | CountingPanel | RiskSetData, beta=None, from_state: str | None = None,
                   to_state: str | None = None) -> tuple[float, np.ndarray, np.ndarray]:
    """Breslow partial log-likelihood with its exact gradient and negative Hessian."""
    if not isinstance(data, RiskSetData):
        data = risk_set_data(data, from_state, to_state)
    return _evaluate(data, _as_beta(beta, data.p))


def breslow_baseline(data: RecordSet | CountingPanel | RiskSetData, beta=None, from_state: str | None = None,
                     to_state: str | None = None) -> StepFunction:
    """Cumulative baseline hazard ``sum dN / sum_{at risk} exp(beta'Z)``."""
    if not isinstance(data, RiskSetData):
        data = risk_set_data(data, from_state, to_state)
    beta = _as_beta(beta, data.p)
    _, shift, w = _linear_predictor(data, beta)
    S0 = _risk_sum(data, w)
    return StepFunction(data.times, np.cumsum(data.d / S0) * np.exp(-shift), 0.0)


@dataclass(frozen=True, eq=False)
class ResidualSet:
    """Martingale residuals ``N_i(t) - int Y_i exp(beta'Z_i) dA0`` per subject."""

    subject_ids: np.ndarray
    data: RiskSetData
    risk: np.ndarray
    baseline: StepFunction

    def at(self, t: float) -> np.ndarray:
        data = self.data
        upper = np.minimum(t, data.exit)
        comp = np.where(t > data.entry, self.risk * (self.baseline(upper) - self.baseline(data.entry)), 0.0)
        counts = (data.event & (data.exit <= t)).astype(float)
        n = self.subject_ids.size
        return np.bincount(data.subject, weights=counts, minlength=n) - np.bincount(data.subject, weights=comp, minlength=n)

    @property
    def final(self) -> np.ndarray:
        return self.at(np.inf)

    def path(self, subject_id) -> StepFunction:
        idx = np.flatnonzero(self.subject_ids == str(subject_id))
        if idx.size == 0:
            raise InputError(f"unknown subject {subject_id!r}")
        mine = self.data.subject == idx[0]
        times = self.data.times
        values = np.empty(times.size)
        for i, t in enumerate(times):
            upper = np.minimum(t, self.data.exit[mine])
            at = t > self.data.entry[mine]
            comp = np.sum(np.where(at, self.risk[mine] * (self.baseline(upper) - self.baseline(self.data.entry[mine])), 0.0))
            values[i] = np.sum(self.data.event[mine] & (self.data.exit[mine] <= t)) - comp
        return StepFunction(times, values, 0.0)

    def paths(self) -> dict:
        return {sid: self.path(sid) for sid in self.subject_ids}


@dataclass(frozen=True, eq=False)
class CoxFit:
    beta: np.ndarray
    loglik: float
    score: np.ndarray
    information: np.ndarray
    iterations: int
    converged: bool
    data: RiskSetData
    loglik_null: float

    @property
    def covariance(self) -> np.ndarray:
        try:
            return np.linalg.inv(self.information)
        except np.linalg.LinAlgError:
            raise SingularInformation("information matrix is singular at the estimate") from None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def baseline(self) -> StepFunction:
        return breslow_baseline(self.data, self.beta)

    @property
    def residuals(self) -> ResidualSet:
        return martingale_residuals(self)

    def to_dict(self) -> dict:
        se = self.se
        z = self.beta / se
        return {
            "covariates": list(self.data.covariate_names),
            "beta": self.beta.tolist(),
            "se": se.tolist(),
            "z": z.tolist(),
            "p": (2.0 * norm.sf(np.abs(z))).tolist(),
            "loglik": self.loglik,
            "loglik_null": self.loglik_null,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def fit(data: RecordSet | CountingPanel | RiskSetData, init=None, tol: float = 1e-9, max_iter: int = 50,
        bound: float = 50.0, from_state: str | None = None, to_state: str | None = None) -> CoxFit:
    """Maximize the partial likelihood by Newton-Raphson with step halving.

    Converged when ``max|score| <= tol`` and the Newton step is below
    ``sqrt(tol)``. Divergence towards an infinite coefficient (``|beta_j| >
    bound``, or a likelihood that no longer increases while Newton steps stay
    of order one) raises :class:`MonotoneLikelihood` carrying the last iterate.
    """
    if not isinstance(data, RiskSetData):
        data = risk_set_data(data, from_state, to_state)
    beta = _as_beta(init, data.p)
    loglik_null = _evaluate(data, np.zeros(data.p), order=0)[0]
    loglik, score, info = _evaluate(data, beta)

    def snapshot(it, converged):
        return CoxFit(beta=beta.copy(), loglik=loglik, score=score, information=info,
                      iterations=it, converged=converged, data=data, loglik_null=loglik_null)

    if data.p == 0:
        return snapshot(0, True)
    step_tol = np.sqrt(tol)
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            if np.max(np.abs(score)) <= tol:
                raise MonotoneLikelihood("information vanished while the score is zero", snapshot(it - 1, False)) from None
            raise SingularInformation("information matrix is singular during Newton-Raphson") from None
        if np.max(np.abs(score)) <= tol and np.max(np.abs(step)) <= step_tol:
            # the final Newton step is tiny; take it unless it moves away from the root
            new_loglik, new_score, new_info = _evaluate(data, beta + step)
            if np.max(np.abs(new_score)) <= np.max(np.abs(score)):
                beta, loglik, score, info = beta + step, new_loglik, new_score, new_info
            return snapshot(it - 1, True)
        candidate = beta + step
        new = _evaluate(data, candidate, order=0)[0]
        halvings = 0
        while not new >= loglik - 1e-12 * (1.0 + abs(loglik)) and halvings < 40:
            step = step / 2.0
            candidate = beta + step
            new = _evaluate(data, candidate, order=0)[0]
            halvings += 1
        gain = new - loglik
        beta = candidate
        loglik, score, info = _evaluate(data, beta)
        if np.max(np.abs(beta)) > bound:
            raise MonotoneLikelihood(f"|beta| exceeded {bound}; the likelihood is monotone", snapshot(it, False))
        if gain <= tol and np.max(np.abs(step)) >= 0.5:
            raise MonotoneLikelihood("likelihood flat along a diverging Newton direction", snapshot(it, False))
    return snapshot(max_iter, False)


def martingale_residuals(fit_result: CoxFit) -> ResidualSet:
    data = fit_result.data
    _, shift, w = _linear_predictor(data, fit_result.beta)
    S0 = _risk_sum(data, w)
    # baseline kept on the shifted scale; exp(shift) cancels in risk * dA0
    shifted = StepFunction(data.times, np.cumsum(data.d / S0), 0.0)
    return ResidualSet(subject_ids=data.subject_ids, data=data, risk=w, baseline=shifted)


@dataclass(frozen=True, eq=False)
class ScoreProcess:
    times: np.ndarray
    path: StepFunction

    def __call__(self, t):
        return self.path(t)

    @property
    def final(self) -> np.ndarray:
        return self.path.values[-1] if len(self.path) else self.path.origin


def accumulated_information(data: RiskSetData, beta) -> StepFunction:
    """Predictable variation of the score process, ``sum d (S2/S0 - mean mean^T)`` up to t."""
    beta = _as_beta(beta, data.p)
    _, _, w = _linear_predictor(data, beta)
    S0 = _risk_sum(data, w)
    wZ = w[:, None] * data.Z
    mean = _risk_sum(data, wZ) / S0[:, None]
    S2 = _risk_sum(data, wZ[:, :, None] * data.Z[:, None, :])
    inc = data.d[:, None, None] * (S2 / S0[:, None, None] - mean[:, :, None] * mean[:, None, :])
    return StepFunction(data.times, np.cumsum(inc, axis=0), np.zeros((data.p, data.p)))


def score_process(source: CoxFit | RecordSet | CountingPanel | RiskSetData, beta=None,
                  from_state: str | None = None, to_state: str | None = None) -> ScoreProcess:
    """``U_t(beta)``: cumulative sum over event times of ``Z_event - risk-weighted mean``."""
    if isinstance(source, CoxFit):
        data = source.data
        beta = source.beta if beta is None else beta
    elif isinstance(source, RiskSetData):
        data = source
    else:
        data = risk_set_data(source, from_state, to_state)
    beta = _as_beta(beta, data.p)
    _, _, w = _linear_predictor(data, beta)
    S0 = _risk_sum(data, w)
    mean = _risk_sum(data, w[:, None] * data.Z) / S0[:, None]
    inc = data.z_events - data.d[:, None] * mean
    return ScoreProcess(times=data.times, path=StepFunction(data.times, np.cumsum(inc, axis=0), np.zeros(data.p)))
