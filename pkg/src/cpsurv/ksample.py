"""Weighted log-rank family of two- and k-sample tests.

With a family factor ``W(s)`` and group at-risk numbers ``Y_j``, the group
processes are ``X_j = sum W (dN_j - Y_j dN / Y)``. For two groups this is the
same number as ``sum L (dN_1/Y_1 - dN_2/Y_2)`` with ``L = W Y_1 Y_2 / Y``.
Variances use the hypergeometric form with the ``(Y - dN)/(Y - 1)`` tie
correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateVariance, InputError, OneGroupEmpty
from .event_data import CountingPanel
from .univariate import _resolve_transition

WEIGHT_FAMILIES = ("logrank", "gehan", "tarone-ware", "peto-peto")


@dataclass(frozen=True, eq=False)
class WeightTable:
    family: str
    times: np.ndarray
    W: np.ndarray
    L: np.ndarray | None


@dataclass(frozen=True, eq=False)
class KSampleResult:
    U: np.ndarray
    V: np.ndarray
    chi_square: float
    df: int
    p_value: float
    weights_used: str
    groups: tuple
    rank: int

    @property
    def statistic(self) -> float:
        """Standardized statistic for the two-sample case."""
        if self.U.size != 1:
            raise InputError("statistic is only defined for two groups")
        return float(self.U[0] / np.sqrt(self.V[0, 0]))

    def to_dict(self) -> dict:
        return {
            "statistic": self.U.tolist() if self.U.size > 1 else float(self.U[0]),
            "variance": self.V.tolist() if self.U.size > 1 else float(self.V[0, 0]),
            "chi_square": self.chi_square,
            "df": self.df,
            "p_value": self.p_value,
            "weights_used": self.weights_used,
            "groups": [None if g is None else str(g) for g in self.groups],
        }


def _group_arrays(panel: CountingPanel, groups, from_state, to_state):
    h, j = _resolve_transition(panel, from_state, to_state)
    labels = panel.groups if groups is None else tuple(groups)
    if len(labels) < 2:
        raise OneGroupEmpty(f"need at least two groups, got {labels}")
    idx = [panel.group_index(g) for g in labels]
    dN = panel.group_dN[idx][:, :, h, :]
    dN = dN.sum(axis=2) if j is None else dN[:, :, j]
    Y = panel.group_Y[idx][:, :, h]
    for g, y in zip(labels, Y):
        if not np.any(y > 0):
            raise OneGroupEmpty(f"group {g!r} is never at risk at an event time")
    return labels, dN.astype(float), Y.astype(float), h


def _family_factor(family: str, d: np.ndarray, Y: np.ndarray, n: int) -> np.ndarray:
    if family == "logrank":
        return np.ones_like(Y)
    if family == "gehan":
        return Y / n
    if family == "tarone-ware":
        return np.sqrt(Y / n)
    if family == "peto-peto":
        # pooled Kaplan-Meier just before each grid point
        factors = np.where(Y > 0, 1.0 - np.divide(d, Y, out=np.zeros_like(d), where=Y > 0), 1.0)
        return np.concatenate([[1.0], np.cumprod(factors)[:-1]])
    raise InputError(f"unknown weight family {family!r}; choose from {WEIGHT_FAMILIES}")


def weight_table(panel: CountingPanel, family: str = "logrank", groups=None,
                 from_state: str | None = None, to_state: str | None = None) -> WeightTable:
    """Per-event-time weights of a family.

    ``W`` is the family factor (1, ``Y/n``, ``sqrt(Y/n)`` or the pooled
    left-continuous Kaplan-Meier). ``L = W Y_1 Y_2 / Y`` is filled in for
    two-group panels and is 0 wherever either group is empty. ``n`` is the
    number of distinct subjects in the panel.
    """
    labels, dN, Y, _ = _group_arrays(panel, groups, from_state, to_state)
    Ytot = Y.sum(axis=0)
    d = dN.sum(axis=0)
    W = _family_factor(family, d, Ytot, panel.n_subjects)
    L = None
    if len(labels) == 2:
        prod = Y[0] * Y[1]
        L = np.where(prod > 0, W * prod / np.where(Ytot > 0, Ytot, 1.0), 0.0)
    return WeightTable(family=family, times=panel.event_times, W=W, L=L)


def _result(U, V, family, labels) -> KSampleResult:
    V = 0.5 * (V + V.T)
    if not np.any(np.abs(V) > 0):
        raise DegenerateVariance("no information before the horizon; the test is undefined")
    scale = np.max(np.abs(V))
    rank = int(np.linalg.matrix_rank(V, tol=scale * 1e-10))
    chi_sq = float(U @ np.linalg.pinv(V, rcond=1e-10, hermitian=True) @ U)
    chi_sq = max(chi_sq, 0.0)
    return KSampleResult(U=U, V=V, chi_square=chi_sq, df=rank, p_value=float(chi2.sf(chi_sq, rank)),
                         weights_used=family, groups=tuple(labels), rank=rank)


def two_sample_test(panel: CountingPanel, weights: str = "logrank", horizon: float | None = None,
                    groups=None, from_state: str | None = None, to_state: str | None = None) -> KSampleResult:
    """Weighted difference of the two groups' Nelson-Aalen increments up to ``horizon``."""
    labels, dN, Y, _ = _group_arrays(panel, groups, from_state, to_state)
    if len(labels) != 2:
        raise InputError(f"two_sample_test needs exactly two groups, got {labels}")
    tab = weight_table(panel, weights, labels, from_state, to_state)
    upto = slice(None) if horizon is None else slice(0, np.searchsorted(panel.event_times, horizon, side="right"))
    Y1, Y2, d1, d2 = Y[0][upto], Y[1][upto], dN[0][upto], dN[1][upto]
    L, W = tab.L[upto], tab.W[upto]
    both = (Y1 > 0) & (Y2 > 0)
    U = np.sum(L[both] * (d1[both] / Y1[both] - d2[both] / Y2[both]))
    Ytot = Y1 + Y2
    d = d1 + d2
    ok = both & (Ytot > 1)
    V = np.sum(W[ok] ** 2 * Y1[ok] * Y2[ok] * d[ok] * (Ytot[ok] - d[ok]) / (Ytot[ok] ** 2 * (Ytot[ok] - 1)))
    return _result(np.array([U]), np.array([[V]]), weights, labels)


def k_sample_test(panel: CountingPanel, weights: str = "logrank", horizon: float | None = None,
                  groups=None, from_state: str | None = None, to_state: str | None = None) -> KSampleResult:
    """Test equality of the groups' intensities from ``X_j``, ``j < k``.

    The chi-square uses a generalized inverse of the covariance; ``df`` is its
    numerical rank.
    """
    labels, dN, Y, _ = _group_arrays(panel, groups, from_state, to_state)
    k = len(labels)
    upto = slice(None) if horizon is None else slice(0, np.searchsorted(panel.event_times, horizon, side="right"))
    dN, Y = dN[:, upto], Y[:, upto]
    Ytot = Y.sum(axis=0)
    d = dN.sum(axis=0)
    W = _family_factor(weights, d, Ytot, panel.n_subjects)
    share = np.divide(Y, Ytot, out=np.zeros_like(Y), where=Ytot > 0)
    X = np.sum(W * (dN - share * d), axis=1)
    tie = np.divide(d * (Ytot - d), Ytot - 1, out=np.zeros_like(d), where=Ytot > 1)
    wt = W ** 2 * tie
    V = np.diag(np.sum(wt * share, axis=1)) - np.einsum("s,js,ls->jl", wt, share, share)
    return _result(X[: k - 1], V[: k - 1, : k - 1], weights, labels)
