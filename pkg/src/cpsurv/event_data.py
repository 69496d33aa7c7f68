"""Event records, validation, and counting-process panels.

Time convention: a record ``(entry, exit]`` is at risk at ``t`` when
``entry < t <= exit``. A censoring at the same time as an event therefore
still counts the censored subject in the risk set at that time.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyData,
    InputError,
    NonFiniteInput,
    NonPositiveDuration,
    OverlappingIntervals,
    RecordError,
    SelfTransition,
    UnknownState,
    Violation,
)

CENSORED = "CENSORED"

_ERROR_CLASSES = {
    "NonPositiveDuration": NonPositiveDuration,
    "OverlappingIntervals": OverlappingIntervals,
    "UnknownState": UnknownState,
    "SelfTransition": SelfTransition,
}


@dataclass(frozen=True)
class EventRecord:
    subject_id: object
    entry: float
    exit: float
    from_state: str
    to_state: str
    covariates: tuple[float, ...] = ()
    group: object = None

    @property
    def censored(self) -> bool:
        return self.to_state == CENSORED


@dataclass(frozen=True, eq=False)
class RecordSet:
    """Column-oriented, validated collection of records.

    ``to_code`` is -1 for censored intervals. Construct through
    :func:`validate_records` unless the columns are known to be valid (the
    simulator does this to skip the checks).
    """

    ids: np.ndarray
    entry: np.ndarray
    exit: np.ndarray
    from_code: np.ndarray
    to_code: np.ndarray
    group_code: np.ndarray
    covariates: np.ndarray
    states: tuple[str, ...]
    groups: tuple = (None,)
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("ids", "entry", "exit", "from_code", "to_code", "group_code", "covariates"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.entry.size

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    @property
    def is_event(self) -> np.ndarray:
        return self.to_code >= 0

    @property
    def n_subjects(self) -> int:
        return np.unique(self.ids).size

    def records(self) -> list[EventRecord]:
        out = []
        for i in range(len(self)):
            to = CENSORED if self.to_code[i] < 0 else self.states[self.to_code[i]]
            out.append(
                EventRecord(
                    subject_id=self.ids[i],
                    entry=float(self.entry[i]),
                    exit=float(self.exit[i]),
                    from_state=self.states[self.from_code[i]],
                    to_state=to,
                    covariates=tuple(float(z) for z in self.covariates[i]),
                    group=self.groups[self.group_code[i]],
                )
            )
        return out

    def select(self, mask: np.ndarray) -> "RecordSet":
        mask = np.asarray(mask)
        return RecordSet(
            ids=self.ids[mask],
            entry=self.entry[mask],
            exit=self.exit[mask],
            from_code=self.from_code[mask],
            to_code=self.to_code[mask],
            group_code=self.group_code[mask],
            covariates=self.covariates[mask],
            states=self.states,
            groups=self.groups,
            covariate_names=self.covariate_names,
        )

    def with_covariates(self, covariates: np.ndarray, names: Sequence[str] | None = None) -> "RecordSet":
        covariates = np.asarray(covariates, dtype=float).reshape(len(self), -1)
        if names is None:
            names = tuple(f"z{j + 1}" for j in range(covariates.shape[1]))
        return RecordSet(
            ids=self.ids, entry=self.entry, exit=self.exit, from_code=self.from_code,
            to_code=self.to_code, group_code=self.group_code, covariates=covariates,
            states=self.states, groups=self.groups, covariate_names=tuple(names),
        )


def concat_records(parts: Sequence[RecordSet]) -> RecordSet:
    """Stack record sets, remapping state and group codes onto a common space.

    Subject ids are kept as given; callers must keep them distinct across parts
    if the parts describe different subjects.
    """
    if not parts:
        raise EmptyData("nothing to concatenate")
    states: list[str] = []
    groups: list = []
    for part in parts:
        states += [s for s in part.states if s not in states]
        groups += [g for g in part.groups if g not in groups]
    p = {part.n_covariates for part in parts}
    if len(p) != 1:
        raise InputError("record sets disagree on the number of covariates")
    cols = {k: [] for k in ("ids", "entry", "exit", "from_code", "to_code", "group_code", "covariates")}
    for part in parts:
        smap = np.array([states.index(s) for s in part.states], dtype=np.int64)
        gmap = np.array([groups.index(g) for g in part.groups], dtype=np.int64)
        cols["ids"].append(part.ids)
        cols["entry"].append(part.entry)
        cols["exit"].append(part.exit)
        cols["from_code"].append(smap[part.from_code])
        cols["to_code"].append(np.where(part.to_code >= 0, smap[np.maximum(part.to_code, 0)], -1))
        cols["group_code"].append(gmap[part.group_code])
        cols["covariates"].append(part.covariates)
    return RecordSet(
        ids=np.concatenate(cols["ids"]),
        entry=np.concatenate(cols["entry"]),
        exit=np.concatenate(cols["exit"]),
        from_code=np.concatenate(cols["from_code"]),
        to_code=np.concatenate(cols["to_code"]),
        group_code=np.concatenate(cols["group_code"]),
        covariates=np.concatenate(cols["covariates"], axis=0),
        states=tuple(states),
        groups=tuple(groups),
        covariate_names=parts[0].covariate_names,
    )


def _columns_from_records(records: Sequence[EventRecord], state_space):
    n = len(records)
    p_set = {len(r.covariates) for r in records}
    if len(p_set) > 1:
        raise InputError("records carry covariate vectors of different lengths")
    p = p_set.pop() if p_set else 0

    if state_space is None:
        seen: list[str] = []
        for r in records:
            for s in (r.from_state, r.to_state):
                if s != CENSORED and s not in seen:
                    seen.append(s)
        states = tuple(seen)
    else:
        states = tuple(state_space)
    index = {s: i for i, s in enumerate(states)}

    groups: list = []
    for r in records:
        if r.group not in groups:
            groups.append(r.group)
    if not groups:
        groups = [None]
    gindex = {g: i for i, g in enumerate(groups)}

    ids = np.empty(n, dtype=object)
    entry = np.empty(n)
    exit_ = np.empty(n)
    from_code = np.full(n, -2, dtype=np.int64)
    to_code = np.full(n, -2, dtype=np.int64)
    group_code = np.empty(n, dtype=np.int64)
    covariates = np.empty((n, p))
    for i, r in enumerate(records):
        ids[i] = r.subject_id
        entry[i] = r.entry
        exit_[i] = r.exit
        from_code[i] = index.get(r.from_state, -2)
        to_code[i] = -1 if r.to_state == CENSORED else index.get(r.to_state, -2)
        group_code[i] = gindex[r.group]
        if p:
            covariates[i] = r.covariates
    return ids, entry, exit_, from_code, to_code, group_code, covariates, states, tuple(groups)


def validate_records(
    records: Sequence[EventRecord] | RecordSet,
    state_space: Sequence[str] | None = None,
    covariate_names: Sequence[str] | None = None,
) -> RecordSet:
    """Check record invariants and return the columnar record set.

    Every violation is collected; the raised :class:`RecordError` subclass is
    the one matching the first violation and ``err.violations`` holds them all.
    """
    if isinstance(records, RecordSet):
        records = records.records()
    records = list(records)
    (ids, entry, exit_, from_code, to_code, group_code,
     covariates, states, groups) = _columns_from_records(records, state_space)

    if not (np.all(np.isfinite(entry)) and np.all(np.isfinite(exit_))):
        raise NonFiniteInput("entry and exit times must be finite")
    if covariates.size and not np.all(np.isfinite(covariates)):
        raise NonFiniteInput("covariates must be finite")

    violations: list[Violation] = []
    for i, r in enumerate(records):
        if from_code[i] == -2:
            violations.append(Violation(r.subject_id, "UnknownState", f"from_state {r.from_state!r} not in state space"))
        if to_code[i] == -2:
            violations.append(Violation(r.subject_id, "UnknownState", f"to_state {r.to_state!r} not in state space"))
        if r.to_state == r.from_state:
            violations.append(Violation(r.subject_id, "SelfTransition", f"{r.from_state!r} -> {r.to_state!r}"))
        if not exit_[i] > entry[i]:
            violations.append(Violation(r.subject_id, "NonPositiveDuration", f"exit {exit_[i]} <= entry {entry[i]}"))
        elif entry[i] < 0:
            violations.append(Violation(r.subject_id, "NonPositiveDuration", f"entry {entry[i]} is negative"))

    by_subject: dict = {}
    for i, r in enumerate(records):
        by_subject.setdefault(r.subject_id, []).append(i)
    for sid, rows in by_subject.items():
        if len(rows) < 2:
            continue
        rows = sorted(rows, key=lambda j: (entry[j], exit_[j]))
        for a, b in zip(rows, rows[1:]):
            if entry[b] < exit_[a]:
                violations.append(
                    Violation(sid, "OverlappingIntervals",
                              f"({entry[a]}, {exit_[a]}] overlaps ({entry[b]}, {exit_[b]}]")
                )

    if violations:
        cls = _ERROR_CLASSES.get(violations[0].kind, RecordError)
        raise cls(violations)

    if covariate_names is None:
        covariate_names = tuple(f"z{j + 1}" for j in range(covariates.shape[1]))
    return RecordSet(
        ids=ids, entry=entry, exit=exit_, from_code=from_code, to_code=to_code,
        group_code=group_code, covariates=covariates, states=states, groups=groups,
        covariate_names=tuple(covariate_names),
    )


def at_risk_counts(records: RecordSet, times: np.ndarray, n_groups: int | None = None) -> np.ndarray:
    """``Y[g, i, h]``: records of group ``g`` in state ``h`` with ``entry < times[i] <= exit``."""
    times = np.asarray(times, dtype=float)
    m = times.size
    k = len(records.states)
    G = len(records.groups) if n_groups is None else n_groups
    lo = np.searchsorted(times, records.entry, side="right")
    hi = np.searchsorted(times, records.exit, side="right")
    base = (records.group_code * k + records.from_code) * (m + 1)
    size = G * k * (m + 1)
    diff = np.bincount(base + lo, minlength=size) - np.bincount(base + hi, minlength=size)
    Y = np.cumsum(diff.reshape(G, k, m + 1), axis=2)[:, :, :m]
    return np.ascontiguousarray(Y.transpose(0, 2, 1))


@dataclass(frozen=True, eq=False)
class CountingPanel:
    """Event-time grid with transition counts and at-risk numbers.

    ``dN[i, h, j]`` counts ``h -> j`` transitions at ``event_times[i]`` and
    ``Y[i, h]`` the records in state ``h`` at risk just before it, both pooled
    over groups. ``group_dN`` / ``group_Y`` carry a leading group axis.
    """

    event_times: np.ndarray
    states: tuple[str, ...]
    groups: tuple
    group_dN: np.ndarray
    group_Y: np.ndarray
    records: RecordSet
    dN: np.ndarray = field(init=False)
    Y: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dN", self.group_dN.sum(axis=0))
        object.__setattr__(self, "Y", self.group_Y.sum(axis=0))
        for name in ("event_times", "group_dN", "group_Y", "dN", "Y"):
            getattr(self, name).setflags(write=False)

    @property
    def n_subjects(self) -> int:
        return self.records.n_subjects

    def state_index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise UnknownState([Violation(None, "UnknownState", f"{label!r} not in {self.states}")]) from None

    def group_index(self, label) -> int:
        try:
            return self.groups.index(label)
        except ValueError:
            raise InputError(f"group {label!r} not in {self.groups}") from None

    def observed_transitions(self) -> list[tuple[str, str]]:
        total = self.dN.sum(axis=0)
        return [(self.states[h], self.states[j]) for h, j in zip(*np.nonzero(total))]

    def at_risk(self, times, group=None) -> np.ndarray:
        """At-risk counts ``(len(times), k)`` at arbitrary times."""
        Y = at_risk_counts(self.records, np.asarray(times, dtype=float), len(self.groups))
        if group is None:
            return Y.sum(axis=0)
        return Y[self.group_index(group)]

    def group_panel(self, label) -> "CountingPanel":
        """Panel restricted to one group, on that group's own event grid."""
        g = self.group_index(label)
        keep = self.group_dN[g].sum(axis=(1, 2)) > 0
        if not keep.any():
            raise EmptyData(f"group {label!r} has no events")
        return CountingPanel(
            event_times=self.event_times[keep],
            states=self.states,
            groups=(label,),
            group_dN=self.group_dN[g : g + 1, keep].copy(),
            group_Y=self.group_Y[g : g + 1, keep].copy(),
            records=self.records.select(self.records.group_code == g),
        )


def build_panel(
    records: RecordSet | Sequence[EventRecord],
    state_space: Sequence[str] | None = None,
    groups: Sequence | None = None,
) -> CountingPanel:
    """Aggregate records into a :class:`CountingPanel`.

    ``groups`` optionally fixes the order of group labels (all labels present in
    the records must be listed). Censoring exits do not add grid points.
    """
    if not isinstance(records, RecordSet):
        records = validate_records(records, state_space)
    elif state_space is not None and tuple(state_space) != records.states:
        records = _recode_states(records, tuple(state_space))
    if groups is not None:
        records = _recode_groups(records, tuple(groups))

    events = records.to_code >= 0
    if not events.any():
        raise EmptyData("no observed transitions")
    times = np.unique(records.exit[events])
    m = times.size
    k = len(records.states)
    G = len(records.groups)

    idx = np.searchsorted(times, records.exit[events])
    flat = ((records.group_code[events] * m + idx) * k + records.from_code[events]) * k + records.to_code[events]
    dN = np.bincount(flat, minlength=G * m * k * k).reshape(G, m, k, k)
    Y = at_risk_counts(records, times, G)
    return CountingPanel(event_times=times, states=records.states, groups=records.groups,
                         group_dN=dN, group_Y=Y, records=records)


def _recode_states(records: RecordSet, states: tuple[str, ...]) -> RecordSet:
    missing = [s for s in records.states if s not in states]
    if missing:
        raise UnknownState([Violation(None, "UnknownState", f"states {missing} not in {states}")])
    smap = np.array([states.index(s) for s in records.states], dtype=np.int64)
    return RecordSet(
        ids=records.ids, entry=records.entry, exit=records.exit,
        from_code=smap[records.from_code],
        to_code=np.where(records.to_code >= 0, smap[np.maximum(records.to_code, 0)], -1),
        group_code=records.group_code, covariates=records.covariates, states=states,
        groups=records.groups, covariate_names=records.covariate_names,
    )


def _recode_groups(records: RecordSet, groups: tuple) -> RecordSet:
    present = np.unique(records.group_code)
    missing = [records.groups[i] for i in present if records.groups[i] not in groups]
    if missing:
        raise InputError(f"records use groups {missing} not listed in {groups}")
    gmap = np.array([groups.index(g) if g in groups else -1 for g in records.groups], dtype=np.int64)
    return RecordSet(
        ids=records.ids, entry=records.entry, exit=records.exit, from_code=records.from_code,
        to_code=records.to_code, group_code=gmap[records.group_code], covariates=records.covariates,
        states=records.states, groups=groups, covariate_names=records.covariate_names,
    )


# --------------------------------------------------------------------- CSV

REQUIRED_COLUMNS = ("id", "entry", "exit", "from", "to")


def read_records_csv(path: str | Path, covariates: Sequence[str] | None = None) -> tuple[list[EventRecord], tuple[str, ...]]:
    """Read ``id,entry,exit,from,to[,group],z1,...`` rows.

    Returns the records and the covariate column names used. Columns after the
    required ones (other than ``group``) are covariates unless ``covariates``
    selects a subset. Empty covariate cells are rejected.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        extra = [h for h in header if h not in REQUIRED_COLUMNS and h != "group"]
        if covariates is None:
            cov_names = tuple(extra)
        else:
            unknown = [c for c in covariates if c not in extra]
            if unknown:
                raise InputError(f"{path}: unknown covariate columns {unknown}")
            cov_names = tuple(covariates)
        col = {h: i for i, h in enumerate(header)}
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                entry = float(row[col["entry"]])
                exit_ = float(row[col["exit"]])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            zs = []
            for name in cov_names:
                cell = row[col[name]].strip()
                if not cell:
                    raise InputError(f"{path}:{lineno}: missing covariate {name!r}")
                try:
                    z = float(cell)
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: {exc}") from None
                if not math.isfinite(z):
                    raise NonFiniteInput(f"{path}:{lineno}: non-finite covariate {name!r}")
                zs.append(z)
            group = row[col["group"]].strip() if "group" in col else None
            out.append(EventRecord(
                subject_id=row[col["id"]].strip(),
                entry=entry,
                exit=exit_,
                from_state=row[col["from"]].strip(),
                to_state=row[col["to"]].strip(),
                covariates=tuple(zs),
                group=group if group != "" else None,
            ))
    return out, cov_names


def write_records_csv(records: RecordSet, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(REQUIRED_COLUMNS) + ["group"] + list(records.covariate_names))
    for r in records.records():
        writer.writerow(
            [r.subject_id, repr(r.entry), repr(r.exit), r.from_state, r.to_state,
             "" if r.group is None else r.group]
            + [repr(z) for z in r.covariates]
        )


def survival_records(
    exits: Iterable[float],
    status: Iterable[int],
    entries: Iterable[float] | None = None,
    covariates=None,
    groups: Iterable | None = None,
) -> RecordSet:
    """Two-state ``alive -> dead`` records from the usual (time, status) layout."""
    exits = list(exits)
    status = list(status)
    entries = [0.0] * len(exits) if entries is None else list(entries)
    groups = [None] * len(exits) if groups is None else list(groups)
    if covariates is None:
        covariates = [()] * len(exits)
    else:
        covariates = [tuple(np.atleast_1d(np.asarray(z, dtype=float))) for z in covariates]
    recs = [
        EventRecord(i, float(e0), float(e1), "alive", "dead" if d else CENSORED, z, g)
        for i, (e0, e1, d, z, g) in enumerate(zip(entries, exits, status, covariates, groups))
    ]
    return validate_records(recs, state_space=("alive", "dead"))
