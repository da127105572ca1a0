"""Finite MDP and Markov-chain data model.

States and actions are dense integer ids.  Transition structure is stored
in a flat compressed-sparse-row layout so that solvers can run over plain
arrays: per state a contiguous range of (state, action) pairs, per pair a
contiguous range of (successor, probability, reward) entries.  Zero
probabilities are rejected at build time, so the stored support and the
probabilistic support coincide and reachability can be read straight off
the arrays.

All objects are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateSuccessor,
    EmptyMask,
    InvalidPolicy,
    ModelError,
    NegativeProbability,
    NonStochasticRow,
)

ROW_SUM_TOL = 1e-12

_MODEL_KEYS = {"states", "actions", "discount", "mask", "transitions"}
_RECORD_KEYS = {"x", "u", "xp", "p", "r"}


def _as_int_array(values, name):
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1:
        raise ModelError(f"{name} must be one-dimensional")
    return arr


def gather_ranges(starts, lengths):
    """Concatenate index ranges [starts[i], starts[i]+lengths[i]) into one array."""
    starts = np.asarray(starts, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(lengths)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(ends - lengths, lengths)
    return np.repeat(starts, lengths) + offsets


def _check_rows(row_ptr, col, prob, state_count, what):
    """Shared row validation: bounds, positivity, duplicates, stochasticity."""
    if col.size:
        if col.min() < 0 or col.max() >= state_count:
            raise ModelError(f"{what}: successor id out of range")
        bad = np.where(prob <= 0.0)[0]
        if bad.size:
            e = int(bad[0])
            raise NegativeProbability(
                f"{what}: non-positive probability {float(prob[e])!r} at entry {e}"
            )
    counts = np.diff(row_ptr)
    if np.any(counts == 0):
        r = int(np.where(counts == 0)[0][0])
        raise NonStochasticRow(f"{what}: row {r} has no entries (sum 0)")
    row_of_entry = np.repeat(np.arange(counts.size, dtype=np.int64), counts)
    same_row = row_of_entry[1:] == row_of_entry[:-1]
    dup = same_row & (col[1:] == col[:-1])
    if np.any(dup):
        e = int(np.where(dup)[0][0])
        raise DuplicateSuccessor(
            f"{what}: duplicate successor {col[e]} in row {row_of_entry[e]}"
        )
    sums = np.add.reduceat(prob, row_ptr[:-1])
    off = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(off):
        r = int(np.where(off)[0][0])
        raise NonStochasticRow(f"{what}: row {r} sums to {float(sums[r])!r}")


def _sort_entries(key_row, col, prob, rew):
    """Order entries by (row, successor); returns sorted copies."""
    order = np.lexsort((col, key_row))
    return col[order], prob[order], None if rew is None else rew[order]


class MarkovChain:
    """Sparse row-stochastic transition structure over dense states.

    Attributes:
      state_count: number of states.
      row_ptr: int64[state_count + 1], entry range per state.
      col: int64[nnz] successor ids, ascending within each row.
      prob: float64[nnz] strictly positive probabilities.
      rew: optional float64[nnz] per-entry rewards.
    """

    __slots__ = ("state_count", "row_ptr", "col", "prob", "rew")

    def __init__(self, state_count, row_ptr, col, prob, rew=None):
        self.state_count = int(state_count)
        self.row_ptr = _as_int_array(row_ptr, "row_ptr")
        self.col = _as_int_array(col, "col")
        self.prob = np.asarray(prob, dtype=np.float64)
        self.rew = None if rew is None else np.asarray(rew, dtype=np.float64)
        if self.row_ptr.size != self.state_count + 1:
            raise ModelError("row_ptr length mismatch")
        row_of_entry = np.repeat(
            np.arange(self.state_count, dtype=np.int64), np.diff(self.row_ptr)
        )
        self.col, self.prob, self.rew = _sort_entries(
            row_of_entry, self.col, self.prob, self.rew
        )
        _check_rows(self.row_ptr, self.col, self.prob, self.state_count, "chain")
        for arr in (self.row_ptr, self.col, self.prob, self.rew):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_rows(cls, rows, rewards=None):
        """Build from a list of per-state [(successor, probability), ...] rows.

        rewards, if given, mirrors the nesting of rows with one real per entry.
        """
        lengths = [len(r) for r in rows]
        row_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lengths, out=row_ptr[1:])
        col = np.array([xp for r in rows for xp, _ in r], dtype=np.int64)
        prob = np.array([p for r in rows for _, p in r], dtype=np.float64)
        rew = None
        if rewards is not None:
            rew = np.array([v for r in rewards for v in r], dtype=np.float64)
            if rew.size != prob.size:
                raise ModelError("rewards shape does not match rows")
        return cls(len(rows), row_ptr, col, prob, rew)

    def row(self, x):
        """Successor and probability arrays of state x (views)."""
        a, b = self.row_ptr[x], self.row_ptr[x + 1]
        return self.col[a:b], self.prob[a:b]

    def self_loop_prob(self, x):
        cols, probs = self.row(x)
        hit = np.where(cols == x)[0]
        return float(probs[hit[0]]) if hit.size else 0.0


def successors(chain, x):
    """The strictly-positive-probability successor entries of x.

    Returns a list of (StateId, probability) pairs, ascending by state id.
    """
    if not 0 <= x < chain.state_count:
        raise ModelError(f"state {x} out of range")
    cols, probs = chain.row(x)
    return [(int(c), float(p)) for c, p in zip(cols, probs)]


class Mdp:
    """Masked-action finite MDP with a sparse transition kernel.

    Layout: (state, action) pairs are enumerated state-major with actions
    ascending inside each state.  pair range of state x is
    state_ptr[x]:state_ptr[x+1]; entry range of pair i is
    pair_ptr[i]:pair_ptr[i+1].
    """

    __slots__ = (
        "state_count",
        "action_count",
        "discount",
        "state_ptr",
        "pair_action",
        "pair_ptr",
        "col",
        "prob",
        "rew",
    )

    def __init__(
        self,
        state_count,
        action_count,
        discount,
        state_ptr,
        pair_action,
        pair_ptr,
        col,
        prob,
        rew,
    ):
        self.state_count = int(state_count)
        self.action_count = int(action_count)
        self.discount = float(discount)
        self.state_ptr = _as_int_array(state_ptr, "state_ptr")
        self.pair_action = _as_int_array(pair_action, "pair_action")
        self.pair_ptr = _as_int_array(pair_ptr, "pair_ptr")
        self.col = _as_int_array(col, "col")
        self.prob = np.asarray(prob, dtype=np.float64)
        self.rew = np.asarray(rew, dtype=np.float64)
        self._validate()
        for arr in (
            self.state_ptr,
            self.pair_action,
            self.pair_ptr,
            self.col,
            self.prob,
            self.rew,
        ):
            arr.setflags(write=False)

    def _validate(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ModelError(f"discount {self.discount} outside [0, 1]")
        if self.state_ptr.size != self.state_count + 1:
            raise ModelError("state_ptr length mismatch")
        n_pairs = self.pair_action.size
        if self.pair_ptr.size != n_pairs + 1:
            raise ModelError("pair_ptr length mismatch")
        if self.rew.size != self.prob.size or self.col.size != self.prob.size:
            raise ModelError("entry array length mismatch")
        pair_counts = np.diff(self.state_ptr)
        if np.any(pair_counts <= 0):
            x = int(np.where(pair_counts <= 0)[0][0])
            raise EmptyMask(f"state {x} has no admissible action")
        if n_pairs:
            if self.pair_action.min() < 0 or self.pair_action.max() >= self.action_count:
                raise ModelError("action id out of range")
        state_of_pair = np.repeat(
            np.arange(self.state_count, dtype=np.int64), pair_counts
        )
        same_state = state_of_pair[1:] == state_of_pair[:-1]
        if np.any(same_state & (self.pair_action[1:] <= self.pair_action[:-1])):
            raise ModelError("mask actions must be strictly ascending per state")
        _check_rows(self.pair_ptr, self.col, self.prob, self.state_count, "mdp")

    @property
    def pair_count(self):
        return self.pair_action.size

    def mask(self, x):
        """Admissible actions of state x, ascending (view)."""
        return self.pair_action[self.state_ptr[x] : self.state_ptr[x + 1]]

    def mask_sizes(self):
        return np.diff(self.state_ptr)

    def pair_index(self, x, u):
        """Dense pair id of (x, u); raises InvalidPolicy if u is masked out."""
        a, b = self.state_ptr[x], self.state_ptr[x + 1]
        i = a + np.searchsorted(self.pair_action[a:b], u)
        if i >= b or self.pair_action[i] != u:
            raise InvalidPolicy(f"action {u} not admissible in state {x}")
        return int(i)

    def row(self, x, u):
        """(successors, probabilities, rewards) arrays of pair (x, u)."""
        i = self.pair_index(x, u)
        a, b = self.pair_ptr[i], self.pair_ptr[i + 1]
        return self.col[a:b], self.prob[a:b], self.rew[a:b]

    def union_chain(self):
        """Chain whose rows are the unions of all admissible action supports.

        Probabilities are the uniform mixture over the state's admissible
        actions, so the support equals the union of the action supports.
        """
        n = self.state_count
        rows_col = []
        rows_prob = []
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        for x in range(n):
            a, b = self.state_ptr[x], self.state_ptr[x + 1]
            lo, hi = self.pair_ptr[a], self.pair_ptr[b]
            cols = self.col[lo:hi]
            probs = self.prob[lo:hi] / (b - a)
            uniq, inv = np.unique(cols, return_inverse=True)
            mass = np.zeros(uniq.size, dtype=np.float64)
            np.add.at(mass, inv, probs)
            rows_col.append(uniq)
            rows_prob.append(mass)
            row_ptr[x + 1] = row_ptr[x] + uniq.size
        return MarkovChain(
            n, row_ptr, np.concatenate(rows_col), np.concatenate(rows_prob)
        )


@dataclass(frozen=True)
class Policy:
    """Deterministic policy: one admissible action per state."""

    choice: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.choice, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "choice", arr)


@dataclass(frozen=True)
class ValueTable:
    """State values plus, when available, per-(state, action) values.

    q is aligned with the owning Mdp's dense pair enumeration; it is None
    for results that carry state values only.
    """

    v: np.ndarray
    q: np.ndarray | None = None


def validate_policy(mdp, policy):
    choice = policy.choice
    if choice.size != mdp.state_count:
        raise InvalidPolicy("policy length does not match state count")
    for x in range(mdp.state_count):
        mdp.pair_index(x, int(choice[x]))


def induced_chain(mdp, policy):
    """Markov chain obtained by following the policy's action in each state."""
    choice = np.asarray(policy.choice, dtype=np.int64)
    if choice.size != mdp.state_count:
        raise InvalidPolicy("policy length does not match state count")
    pairs = np.empty(mdp.state_count, dtype=np.int64)
    for x in range(mdp.state_count):
        pairs[x] = mdp.pair_index(x, int(choice[x]))
    starts = mdp.pair_ptr[pairs]
    lengths = mdp.pair_ptr[pairs + 1] - starts
    idx = gather_ranges(starts, lengths)
    row_ptr = np.zeros(mdp.state_count + 1, dtype=np.int64)
    np.cumsum(lengths, out=row_ptr[1:])
    return MarkovChain(
        mdp.state_count, row_ptr, mdp.col[idx], mdp.prob[idx], mdp.rew[idx]
    )


def mdp_from_chain(chain, discount=1.0):
    """Wrap a chain as a single-action MDP (action 0 admissible everywhere)."""
    n = chain.state_count
    rew = chain.rew if chain.rew is not None else np.zeros(chain.prob.size)
    return Mdp(
        state_count=n,
        action_count=1,
        discount=discount,
        state_ptr=np.arange(n + 1, dtype=np.int64),
        pair_action=np.zeros(n, dtype=np.int64),
        pair_ptr=chain.row_ptr,
        col=chain.col,
        prob=chain.prob,
        rew=rew,
    )


def build_mdp(spec):
    """Validate a raw model description and construct an Mdp.

    The description is a mapping with fields states, actions, discount,
    mask (list of per-state admissible action lists) and transitions (list
    of {x, u, xp, p, r} records).  Unknown fields are rejected; rows are
    checked, never renormalized.
    """
    if not isinstance(spec, dict):
        raise ModelError("model description must be a JSON object")
    unknown = set(spec) - _MODEL_KEYS
    if unknown:
        raise ModelError(f"unknown model fields: {sorted(unknown)}")
    missing = _MODEL_KEYS - set(spec)
    if missing:
        raise ModelError(f"missing model fields: {sorted(missing)}")
    try:
        state_count = int(spec["states"])
        action_count = int(spec["actions"])
        discount = float(spec["discount"])
    except (TypeError, ValueError) as exc:
        raise ModelError(f"bad scalar field: {exc}") from None
    if state_count <= 0 or action_count <= 0:
        raise ModelError("states and actions must be positive")

    mask = spec["mask"]
    if not isinstance(mask, list) or len(mask) != state_count:
        raise ModelError("mask must list actions for every state")
    mask_sets = []
    for x, actions in enumerate(mask):
        if not actions:
            raise EmptyMask(f"state {x} has no admissible action")
        acts = sorted(int(u) for u in actions)
        if any(u < 0 or u >= action_count for u in acts):
            raise ModelError(f"state {x}: action id out of range")
        if len(set(acts)) != len(acts):
            raise ModelError(f"state {x}: duplicate action in mask")
        mask_sets.append(acts)

    records = spec["transitions"]
    if not isinstance(records, list):
        raise ModelError("transitions must be a list of records")
    xs = np.empty(len(records), dtype=np.int64)
    us = np.empty(len(records), dtype=np.int64)
    xps = np.empty(len(records), dtype=np.int64)
    ps = np.empty(len(records), dtype=np.float64)
    rs = np.empty(len(records), dtype=np.float64)
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise ModelError(f"transition {i} is not a record")
        unknown = set(rec) - _RECORD_KEYS
        if unknown:
            raise ModelError(f"transition {i}: unknown fields {sorted(unknown)}")
        missing = _RECORD_KEYS - set(rec)
        if missing:
            raise ModelError(f"transition {i}: missing fields {sorted(missing)}")
        xs[i], us[i], xps[i] = int(rec["x"]), int(rec["u"]), int(rec["xp"])
        ps[i], rs[i] = float(rec["p"]), float(rec["r"])
    if xs.size:
        if xs.min() < 0 or xs.max() >= state_count:
            raise ModelError("transition source out of range")
        if xps.min() < 0 or xps.max() >= state_count:
            raise ModelError("transition successor out of range")
        if us.min() < 0 or us.max() >= action_count:
            raise ModelError("transition action out of range")

    # Dense pair enumeration from the mask, state-major.
    pair_of = {}
    pair_action = []
    state_ptr = np.zeros(state_count + 1, dtype=np.int64)
    for x, acts in enumerate(mask_sets):
        for u in acts:
            pair_of[(x, u)] = len(pair_action)
            pair_action.append(u)
        state_ptr[x + 1] = len(pair_action)

    pair_ids = np.empty(len(records), dtype=np.int64)
    for i in range(len(records)):
        key = (int(xs[i]), int(us[i]))
        if key not in pair_of:
            raise ModelError(
                f"transition {i}: action {key[1]} not in mask of state {key[0]}"
            )
        pair_ids[i] = pair_of[key]

    order = np.lexsort((xps, pair_ids))
    pair_ids = pair_ids[order]
    counts = np.bincount(pair_ids, minlength=len(pair_action))
    if np.any(counts == 0):
        i = int(np.where(counts == 0)[0][0])
        x = int(np.searchsorted(state_ptr, i, side="right") - 1)
        raise NonStochasticRow(
            f"pair (state {x}, action {pair_action[i]}) has no transitions"
        )
    pair_ptr = np.zeros(len(pair_action) + 1, dtype=np.int64)
    np.cumsum(counts, out=pair_ptr[1:])
    return Mdp(
        state_count=state_count,
        action_count=action_count,
        discount=discount,
        state_ptr=state_ptr,
        pair_action=np.asarray(pair_action, dtype=np.int64),
        pair_ptr=pair_ptr,
        col=xps[order],
        prob=ps[order],
        rew=rs[order],
    )


def mdp_to_spec(mdp):
    """Serialize an Mdp back to the model description format.

    Rebuilding the result with build_mdp reproduces the sparse structure
    bit for bit: entries are already stored in (state, action, successor)
    order and floats survive the JSON round trip exactly.
    """
    mask = [[int(u) for u in mdp.mask(x)] for x in range(mdp.state_count)]
    transitions = []
    for x in range(mdp.state_count):
        for i in range(mdp.state_ptr[x], mdp.state_ptr[x + 1]):
            u = int(mdp.pair_action[i])
            for e in range(mdp.pair_ptr[i], mdp.pair_ptr[i + 1]):
                transitions.append(
                    {
                        "x": x,
                        "u": u,
                        "xp": int(mdp.col[e]),
                        "p": float(mdp.prob[e]),
                        "r": float(mdp.rew[e]),
                    }
                )
    return {
        "states": mdp.state_count,
        "actions": mdp.action_count,
        "discount": mdp.discount,
        "mask": mask,
        "transitions": transitions,
    }
