"""Empirical transition matrices for finite-state Markov processes.

The estimator is the finite product of ``I + dA(u)`` over the observed
transition times in ``(s, t]``, taken left to right in time. Its covariance
uses multinomial plug-in covariances for each row of ``I + dA(u)``:

    Cov(F_hj, F_hl) = (p_j [j == l] - p_j p_l) / Y_h,   p = row h of I + dA(u)

propagated through the product by the delta method, which is the matrix
Duhamel representation with the noise ``d(A_hat - A)`` replaced by its plug-in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NegativeDiagonal, RiskSetEmpty, UnknownTransition
from .event_data import CountingPanel
from .stepfun import StepFunction


@dataclass(frozen=True, eq=False)
class IntensityMatrixPath:
    """Nelson-Aalen increments collected as matrices; rows sum to zero."""

    states: tuple[str, ...]
    times: np.ndarray
    increments: np.ndarray
    counts: np.ndarray
    at_risk: np.ndarray

    @property
    def k(self) -> int:
        return len(self.states)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments, axis=0)

    def __call__(self, t: float) -> np.ndarray:
        n = np.searchsorted(self.times, t, side="right")
        return self.increments[:n].sum(axis=0)

    def hazard(self, from_state: str, to_state: str) -> StepFunction:
        try:
            h, j = self.states.index(from_state), self.states.index(to_state)
        except ValueError:
            raise UnknownTransition(f"{from_state!r} -> {to_state!r} not in {self.states}") from None
        return StepFunction(self.times, np.cumsum(self.increments[:, h, j]), 0.0)


@dataclass(frozen=True, eq=False)
class TransitionMatrixPath:
    """``P(start, t)`` at each transition time in ``(start, end]``.

    ``covariance[i]`` is the covariance of the row-major ``vec`` of
    ``matrices[i]``, shape ``(k*k, k*k)``.
    """

    states: tuple[str, ...]
    start: float
    times: np.ndarray
    matrices: np.ndarray
    covariance: np.ndarray | None = None

    @property
    def k(self) -> int:
        return len(self.states)

    def __call__(self, t: float) -> np.ndarray:
        n = np.searchsorted(self.times, t, side="right")
        if n == 0:
            return np.eye(self.k)
        return self.matrices[n - 1]

    def _pair(self, from_state, to_state) -> tuple[int, int]:
        try:
            return self.states.index(from_state), self.states.index(to_state)
        except ValueError:
            raise UnknownTransition(f"{from_state!r} -> {to_state!r} not in {self.states}") from None

    def entry(self, from_state: str, to_state: str) -> StepFunction:
        h, j = self._pair(from_state, to_state)
        return StepFunction(self.times, self.matrices[:, h, j], float(h == j))

    def variance(self, from_state: str, to_state: str) -> StepFunction:
        if self.covariance is None:
            raise InputError("path was computed without covariance")
        h, j = self._pair(from_state, to_state)
        idx = h * self.k + j
        return StepFunction(self.times, self.covariance[:, idx, idx], 0.0)


def cumulative_intensity_matrix(panel: CountingPanel, group=None) -> IntensityMatrixPath:
    """Nelson-Aalen estimates of all cumulative transition intensities."""
    if group is None:
        dN, Y = panel.dN, panel.Y
    else:
        g = panel.group_index(group)
        dN, Y = panel.group_dN[g], panel.group_Y[g]
    out_counts = dN.sum(axis=2)
    if np.any((out_counts > 0) & (Y <= 0)):
        raise RiskSetEmpty("transitions recorded out of a state with an empty risk set")
    safe_Y = np.where(Y > 0, Y, 1).astype(float)
    inc = dN / safe_Y[:, :, None]
    k = len(panel.states)
    diag = np.arange(k)
    inc[:, diag, diag] = -(out_counts / safe_Y)
    keep = out_counts.sum(axis=1) > 0
    return IntensityMatrixPath(
        states=panel.states,
        times=panel.event_times[keep],
        increments=inc[keep],
        counts=dN[keep],
        at_risk=Y[keep],
    )


def _window(intensities: IntensityMatrixPath, s: float, t: float | None):
    if t is None:
        t = intensities.times[-1] if intensities.times.size else s
    if t < s:
        raise InputError(f"need s <= t, got s={s}, t={t}")
    lo = np.searchsorted(intensities.times, s, side="right")
    hi = np.searchsorted(intensities.times, t, side="right")
    return slice(lo, hi)


def _factors(intensities: IntensityMatrixPath, window: slice) -> np.ndarray:
    F = intensities.increments[window].copy()
    k = intensities.k
    diag = np.arange(k)
    F[:, diag, diag] += 1.0
    if np.any(F[:, diag, diag] < 0):
        raise NegativeDiagonal("1 + dA_hh < 0: more exits than subjects at risk")
    return F


def _row_covariances(F: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Multinomial covariance of each row of each factor, shape ``(m, k, k, k)``."""
    m, k, _ = F.shape
    sig = -F[:, :, :, None] * F[:, :, None, :]
    diag = np.arange(k)
    sig[:, :, diag, diag] += F
    Yf = Y.astype(float)
    scale = np.divide(1.0, Yf, out=np.zeros_like(Yf), where=Yf > 0)
    return sig * scale[:, :, None, None]


def aalen_johansen(intensities: IntensityMatrixPath, s: float = 0.0, t: float | None = None,
                   covariance: bool = False) -> TransitionMatrixPath:
    """Transition matrix estimate ``P(s, u)`` for all transition times ``u`` in ``(s, t]``.

    With ``covariance=True`` the plug-in covariance is accumulated alongside by
    the forward recursion ``C(u) = (F^T x I) C(u-) (F x I) + (I x P(u-)) Sig (I x P(u-))^T``.
    """
    window = _window(intensities, s, t)
    F = _factors(intensities, window)
    k = intensities.k
    m = F.shape[0]
    mats = np.empty((m, k, k))
    P = np.eye(k)
    for i in range(m):
        P = P @ F[i]
        mats[i] = P
    cov = None
    if covariance:
        sig = _row_covariances(F, intensities.at_risk[window])
        cov = np.empty((m, k * k, k * k))
        C = np.zeros((k, k, k, k))
        prev = np.eye(k)
        for i in range(m):
            C = np.einsum("iakb,aj,bl->ijkl", C, F[i], F[i]) + np.einsum("ih,kh,hjl->ijkl", prev, prev, sig[i])
            cov[i] = C.reshape(k * k, k * k)
            prev = mats[i]
    return TransitionMatrixPath(
        states=intensities.states,
        start=float(s),
        times=intensities.times[window],
        matrices=mats,
        covariance=cov,
    )


def aj_covariance(intensities: IntensityMatrixPath, panel: CountingPanel | None = None,
                  s: float = 0.0, t: float | None = None) -> np.ndarray:
    """Plug-in covariance of ``vec(P_hat(s, t))`` (row-major), shape ``(k*k, k*k)``.

    Computed as the sum over transition times ``u`` of
    ``P(s, u-) dF(u) P(u, t)`` contributions rather than by recursion, so it
    doubles as an independent check of the path covariance. ``panel`` is
    optional and only checked for consistency with ``intensities``.
    """
    if panel is not None and not np.all(np.isin(intensities.times, panel.event_times)):
        raise InputError("intensities were not estimated on this panel")
    return aj_endpoint(intensities, s, t)[1]


def aj_endpoint(intensities: IntensityMatrixPath, s: float = 0.0,
                t: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``P_hat(s, t)`` and its plug-in covariance from one pass of prefix/suffix products."""
    window = _window(intensities, s, t)
    F = _factors(intensities, window)
    k = intensities.k
    m = F.shape[0]
    if m == 0:
        return np.eye(k), np.zeros((k * k, k * k))
    before = np.empty((m, k, k))
    after = np.empty((m, k, k))
    P = np.eye(k)
    for i in range(m):
        before[i] = P
        P = P @ F[i]
    B = np.eye(k)
    for i in range(m - 1, -1, -1):
        after[i] = B
        B = F[i] @ B
    sig = _row_covariances(F, intensities.at_risk[window])
    # spread[u, h] = after[u]^T sig[u, h] after[u]
    spread = np.swapaxes(after, 1, 2)[:, None] @ sig @ after[:, None]
    outer = before[:, :, None, :] * before[:, None, :, :]            # (u, i, k, h)
    C = np.tensordot(outer, spread, axes=([0, 3], [0, 1]))           # (i, k, j, l)
    return P, C.transpose(0, 2, 1, 3).reshape(k * k, k * k)
