"""Hypothesis strategies for small event-history data sets."""

import numpy as np
from hypothesis import strategies as st

from cpsurv.event_data import CENSORED, EventRecord

# Times on a coarse lattice so that ties between events, censorings and
# entries happen often.
lattice = st.integers(min_value=0, max_value=12).map(float)


@st.composite
def survival_data(draw, min_n=1, max_n=12, groups=(None,), p=0, entry=False):
    n = draw(st.integers(min_n, max_n))
    recs = []
    for i in range(n):
        start = draw(lattice) / 2 if entry else 0.0
        length = draw(st.integers(1, 10))
        event = draw(st.booleans())
        z = tuple(draw(st.floats(-2, 2, allow_nan=False)) for _ in range(p))
        g = draw(st.sampled_from(groups))
        recs.append(EventRecord(i, start, start + float(length), "alive", "dead" if event else CENSORED, z, g))
    return recs


@st.composite
def multistate_data(draw, states=("1", "2", "3"), max_n=10, max_steps=3):
    """Histories moving between states; some states are absorbing by chance."""
    n = draw(st.integers(1, max_n))
    recs = []
    for i in range(n):
        t = 0.0
        state = states[0]
        for _ in range(draw(st.integers(1, max_steps))):
            length = float(draw(st.integers(1, 5)))
            nxt = draw(st.sampled_from([s for s in states if s != state] + [CENSORED]))
            recs.append(EventRecord(i, t, t + length, state, nxt))
            if nxt == CENSORED:
                break
            t += length
            state = nxt
    return recs


def brute_force_at_risk(records, t, state="alive", group=None, use_group=False):
    return sum(
        1 for r in records
        if r.entry < t <= r.exit and r.from_state == state and (not use_group or r.group == group)
    )


def as_array(x):
    return np.asarray(x, dtype=float)
