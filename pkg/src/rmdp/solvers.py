"""Solvers: one-pass reductive value iteration and iterative baselines.

rvi_solve performs exactly one closed-form q evaluation per transient
(state, action) pair, walking the level-set schedule in ascending order
after the absorbing part has been solved.  qvi_solve is classical
Gauss-Seidel value iteration with a configurable state ordering.
bvi_solve drives plain Bellman backups through a FIFO queue seeded at the
absorbing boundary.  All three return the same SolveResult shape with
instrumentation counters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import (
    DivergentSelfLoop,
    InvalidParams,
    MaxSweepsExceeded,
    NonContractive,
    NotReductive,
    ScheduleMismatch,
)
from .mdp import Policy, ValueTable, induced_chain
from .reachability import absorbing_decomposition

NATURAL = "Natural"
RANDOM_PER_SWEEP = "RandomPerSweep"
REVERSED_LEVEL_SETS = "ReversedLevelSets"
_ORDERINGS = (NATURAL, RANDOM_PER_SWEEP, REVERSED_LEVEL_SETS)


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for the iterative solvers.

    epsilon bounds the max per-state residual at termination; max_sweeps
    caps Gauss-Seidel sweeps (and, scaled by the state and action counts,
    BVI dequeues).  seed drives the RandomPerSweep ordering.
    """

    epsilon: float = 1e-10
    max_sweeps: int = 100_000
    ordering: str = NATURAL
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1e-2:
            raise InvalidParams(f"epsilon {self.epsilon} outside (0, 1e-2]")
        if self.max_sweeps < 1:
            raise InvalidParams("max_sweeps must be at least 1")
        if self.ordering not in _ORDERINGS:
            raise InvalidParams(f"unknown ordering {self.ordering!r}")


@dataclass(frozen=True)
class SolveStats:
    q_updates: int
    sweeps: int
    wall_nanos: int
    converged: bool
    residual: float


@dataclass(frozen=True)
class SolveResult:
    values: ValueTable
    policy: Policy
    stats: SolveStats

    def to_json_dict(self):
        return {
            "v": [float(x) for x in self.values.v],
            "policy": [int(a) for a in self.policy.choice],
            "stats": {
                "q_updates": self.stats.q_updates,
                "sweeps": self.stats.sweeps,
                "wall_nanos": self.stats.wall_nanos,
                "converged": self.stats.converged,
                "residual": self.stats.residual,
            },
        }


def q_update(mdp, values, x, u):
    """Closed-form action value of (x, u) given final successor values.

    Evaluates q(x,u) = [r(x,u) + gamma*beta*q'(x,u)] / (1 - gamma*alpha)
    where alpha is the self-loop probability p(x|x,u), beta = 1 - alpha,
    r(x,u) the expected one-step reward, and q'(x,u) the expected value of
    the successor conditioned on leaving x.  Self-transitions contribute
    through the denominator, so no fixed point over repeats is needed.
    """
    cols, probs, rews = mdp.row(x, u)
    gamma = mdp.discount
    v = values.v
    alpha = 0.0
    rbar = 0.0
    s = 0.0
    for c, p, r in zip(cols, probs, rews):
        rbar += p * r
        if c == x:
            alpha += p
        else:
            s += p * v[c]
    denom = 1.0 - gamma * alpha
    if denom <= 0.0:
        raise DivergentSelfLoop(f"gamma * p({x}|{x},{u}) = 1")
    return (rbar + gamma * s) / denom


def _absorbing_rewards_nonzero(mdp, states):
    for x in states:
        a, b = mdp.state_ptr[x], mdp.state_ptr[x + 1]
        if np.any(mdp.rew[mdp.pair_ptr[a] : mdp.pair_ptr[b]] != 0.0):
            return True
    return False


def _lowest_actions(mdp, states, pol):
    pol[states] = mdp.pair_action[mdp.state_ptr[states]]


def _solve_absorbing(mdp, decomp, cfg, v, q, pol):
    """Fill v/q/pol on the absorbing part.  Returns (residual, sweeps)."""
    absorbing = decomp.absorbing
    if absorbing.size == 0:
        return 0.0, 0
    if not _absorbing_rewards_nonzero(mdp, absorbing):
        # All absorbing rewards are exactly zero: the fixed point is
        # v = 0 with q = 0, no iteration needed.
        v[absorbing] = 0.0
        _lowest_actions(mdp, absorbing, pol)
        return 0.0, 0
    if mdp.discount >= 1.0:
        for block in decomp.classes:
            if _absorbing_rewards_nonzero(mdp, block):
                raise NonContractive(
                    f"discount 1 with nonzero rewards on absorbing class "
                    f"containing state {int(block[0])}"
                )
    order = np.sort(absorbing).astype(np.int64)
    residual = np.inf
    sweeps = 0
    while True:
        residual = backends.gs_sweep(
            order,
            mdp.state_ptr,
            mdp.pair_action,
            mdp.pair_ptr,
            mdp.col,
            mdp.prob,
            mdp.rew,
            mdp.discount,
            v,
            q,
            pol,
        )
        sweeps += 1
        if residual < cfg.epsilon:
            return float(residual), sweeps
        if sweeps >= cfg.max_sweeps:
            raise MaxSweepsExceeded(
                f"absorbing solve: residual {residual} after {sweeps} sweeps"
            )


def solve_absorbing_subspace(mdp, decomp, cfg):
    """Values on the absorbing part only; transient entries are left 0."""
    v = np.zeros(mdp.state_count, dtype=np.float64)
    q = np.zeros(mdp.pair_count, dtype=np.float64)
    pol = np.zeros(mdp.state_count, dtype=np.int64)
    _lowest_actions(mdp, np.arange(mdp.state_count, dtype=np.int64), pol)
    _solve_absorbing(mdp, decomp, cfg, v, q, pol)
    return ValueTable(v=v, q=q)


def _check_schedule(mdp, schedule, decomp):
    if decomp.transient.size + decomp.absorbing.size != mdp.state_count:
        raise ScheduleMismatch("decomposition does not cover the state space")
    if decomp.transient.size and decomp.absorbing.size == 0:
        raise NotReductive("transient states with an empty absorbing part")
    levels = list(schedule.levels)
    total = (
        np.concatenate(levels).astype(np.int64)
        if levels
        else np.empty(0, dtype=np.int64)
    )
    if not np.array_equal(np.sort(total), np.sort(decomp.transient)):
        raise ScheduleMismatch("schedule does not enumerate the transient set")
    return levels, total


def rvi_solve(mdp, schedule, decomp, cfg=None):
    """Single-pass solve: absorbing part first, then levels ascending.

    Each transient (state, action) pair is evaluated exactly once with the
    closed-form update, so stats.q_updates equals the number of admissible
    transient pairs and stats.sweeps is always 1.  Raises ScheduleMismatch
    when a level references a successor outside earlier levels or the
    absorbing part, and DivergentSelfLoop on gamma * p(x|x,u) = 1.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    t0 = time.perf_counter_ns()
    levels, level_cat = _check_schedule(mdp, schedule, decomp)

    v = np.zeros(mdp.state_count, dtype=np.float64)
    q = np.zeros(mdp.pair_count, dtype=np.float64)
    pol = np.zeros(mdp.state_count, dtype=np.int64)
    residual, _ = _solve_absorbing(mdp, decomp, cfg, v, q, pol)

    solved = np.zeros(mdp.state_count, dtype=np.uint8)
    solved[decomp.absorbing] = 1
    level_ptr = np.zeros(len(levels) + 1, dtype=np.int64)
    if levels:
        np.cumsum(
            np.asarray([lv.size for lv in levels], dtype=np.int64),
            out=level_ptr[1:],
        )
    level_states = level_cat.astype(np.int64)

    code, bad = backends.rvi_pass(
        level_ptr,
        level_states,
        mdp.state_ptr,
        mdp.pair_action,
        mdp.pair_ptr,
        mdp.col,
        mdp.prob,
        mdp.rew,
        mdp.discount,
        v,
        solved,
        q,
        pol,
    )
    if code == backends.RVI_UNSOLVED_SUCCESSOR:
        raise ScheduleMismatch(f"state {int(bad)} reads an unsolved successor")
    if code == backends.RVI_DIVERGENT_LOOP:
        raise DivergentSelfLoop(f"state {int(bad)} has gamma * p(x|x,u) = 1")

    sizes = mdp.mask_sizes()
    q_updates = int(sizes[level_states].sum()) if level_states.size else 0
    stats = SolveStats(
        q_updates=q_updates,
        sweeps=1,
        wall_nanos=time.perf_counter_ns() - t0,
        converged=True,
        residual=float(residual),
    )
    return SolveResult(values=ValueTable(v=v, q=q), policy=Policy(pol), stats=stats)


def _reversed_order(mdp, schedule):
    if schedule is None:
        raise InvalidParams("ReversedLevelSets ordering requires a schedule")
    levels = list(schedule.levels)
    in_schedule = np.zeros(mdp.state_count, dtype=bool)
    for lv in levels:
        in_schedule[lv] = True
    rest = np.where(~in_schedule)[0].astype(np.int64)
    parts = [np.asarray(lv, dtype=np.int64) for lv in reversed(levels)]
    parts.append(rest)
    return np.concatenate(parts)


def qvi_solve(mdp, cfg, schedule=None, v0=None):
    """Gauss-Seidel value iteration with a configurable sweep order.

    Sweeps run until the max per-state value change drops below
    cfg.epsilon.  ReversedLevelSets processes the schedule's levels in
    descending potential with the remaining states last, the worst case
    for information flow; it needs the schedule argument.  v0 warm-starts
    the value table.
    """
    t0 = time.perf_counter_ns()
    n = mdp.state_count
    if cfg.ordering == REVERSED_LEVEL_SETS:
        fixed_order = _reversed_order(mdp, schedule)
    elif cfg.ordering == NATURAL:
        fixed_order = np.arange(n, dtype=np.int64)
    else:
        fixed_order = None
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))

    v = (
        np.array(v0, dtype=np.float64, copy=True)
        if v0 is not None
        else np.zeros(n, dtype=np.float64)
    )
    if v.size != n:
        raise InvalidParams("v0 length does not match state count")
    q = np.zeros(mdp.pair_count, dtype=np.float64)
    pol = np.zeros(n, dtype=np.int64)

    per_sweep = mdp.pair_count
    sweeps = 0
    q_updates = 0
    while True:
        order = (
            fixed_order
            if fixed_order is not None
            else rng.permutation(n).astype(np.int64)
        )
        residual = backends.gs_sweep(
            order,
            mdp.state_ptr,
            mdp.pair_action,
            mdp.pair_ptr,
            mdp.col,
            mdp.prob,
            mdp.rew,
            mdp.discount,
            v,
            q,
            pol,
        )
        sweeps += 1
        q_updates += per_sweep
        if residual < cfg.epsilon:
            break
        if sweeps >= cfg.max_sweeps:
            raise MaxSweepsExceeded(
                f"residual {residual} after {sweeps} sweeps"
            )
    stats = SolveStats(
        q_updates=q_updates,
        sweeps=sweeps,
        wall_nanos=time.perf_counter_ns() - t0,
        converged=True,
        residual=float(residual),
    )
    return SolveResult(values=ValueTable(v=v, q=q), policy=Policy(pol), stats=stats)


def _raw_reverse_graph(mdp):
    """Deduplicated predecessor lists over every action's support.

    Unlike the n-step predecessor map this keeps self-edges, so a state
    whose value moved re-enqueues itself when it has a self-loop and keeps
    iterating it to convergence.
    """
    n = mdp.state_count
    sizes = mdp.mask_sizes()
    state_of_pair = np.repeat(np.arange(n, dtype=np.int64), sizes)
    src = np.repeat(state_of_pair, np.diff(mdp.pair_ptr))
    keys = np.unique(mdp.col * np.int64(n) + src)
    rev_dst = keys // n
    rev_src = keys % n
    rev_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rev_dst, minlength=n), out=rev_ptr[1:])
    return rev_ptr, rev_src


def bvi_solve(mdp, decomp, cfg):
    """Queue-based backward value iteration from the absorbing boundary.

    Seeds a FIFO queue with the one-step predecessors of the absorbing
    part (ascending id), then repeatedly dequeues a state, backs up all
    its admissible actions, and enqueues its raw-edge transient
    predecessors whenever the value moved by more than cfg.epsilon — or
    when the predecessor has never been backed up, so a zero-delta state
    (one whose value is already exact) still passes the wavefront
    upstream.  stats.sweeps counts dequeues; stats.q_updates counts every
    backup.
    """
    t0 = time.perf_counter_ns()
    if decomp.absorbing.size == 0:
        raise NotReductive("BVI needs a nonempty absorbing part")
    n = mdp.state_count
    v = np.zeros(n, dtype=np.float64)
    q = np.zeros(mdp.pair_count, dtype=np.float64)
    pol = np.zeros(n, dtype=np.int64)
    _lowest_actions(mdp, np.arange(n, dtype=np.int64), pol)
    _solve_absorbing(mdp, decomp, cfg, v, q, pol)

    rev_ptr, rev_src = _raw_reverse_graph(mdp)
    is_abs = np.zeros(n, dtype=bool)
    is_abs[decomp.absorbing] = True
    is_transient = (~is_abs).astype(np.uint8)
    seed_mask = np.zeros(n, dtype=bool)
    for x in decomp.absorbing:
        preds = rev_src[rev_ptr[x] : rev_ptr[x + 1]]
        seed_mask[preds] = True
    seed_mask[decomp.absorbing] = False
    seeds = np.where(seed_mask)[0].astype(np.int64)

    cap = int(cfg.max_sweeps) * n * mdp.action_count
    dequeues, backups, code = backends.bvi_run(
        seeds,
        is_transient,
        rev_ptr,
        rev_src,
        mdp.state_ptr,
        mdp.pair_action,
        mdp.pair_ptr,
        mdp.col,
        mdp.prob,
        mdp.rew,
        mdp.discount,
        cfg.epsilon,
        cap,
        v,
        q,
        pol,
    )
    if code == backends.BVI_CAP_EXCEEDED:
        raise MaxSweepsExceeded(f"BVI hit the dequeue cap ({cap})")
    stats = SolveStats(
        q_updates=int(backups),
        sweeps=int(dequeues),
        wall_nanos=time.perf_counter_ns() - t0,
        converged=True,
        residual=0.0,
    )
    return SolveResult(values=ValueTable(v=v, q=q), policy=Policy(pol), stats=stats)


def bellman_residual(mdp, v):
    """Max-norm residual of one synchronous Bellman backup at v."""
    return float(
        backends.bellman_residual_pass(
            mdp.state_ptr,
            mdp.pair_ptr,
            mdp.col,
            mdp.prob,
            mdp.rew,
            mdp.discount,
            np.asarray(v, dtype=np.float64),
        )
    )


@dataclass(frozen=True)
class Trajectory:
    """One rollout: states has one more element than actions and rewards."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray


def simulate_policy(mdp, policy, start, horizon, trials, seed):
    """Monte-Carlo rollouts of a fixed policy, deterministic given seed.

    Each trajectory stops on entering an absorbing state of the induced
    chain or after horizon transitions, whichever comes first.  Trial t
    uses the t-th spawned child of the seed, so results do not depend on
    execution order.
    """
    if horizon < 1 or trials < 1:
        raise InvalidParams("horizon and trials must be at least 1")
    chain = induced_chain(mdp, policy)
    decomp = absorbing_decomposition(chain)
    is_abs = np.zeros(chain.state_count, dtype=bool)
    is_abs[decomp.absorbing] = True

    row_cum = []
    for x in range(chain.state_count):
        a, b = chain.row_ptr[x], chain.row_ptr[x + 1]
        row_cum.append(np.cumsum(chain.prob[a:b]))

    children = np.random.SeedSequence(seed).spawn(trials)
    out = []
    choice = policy.choice
    for t in range(trials):
        rng = np.random.Generator(np.random.PCG64(children[t]))
        x = int(start)
        states = [x]
        actions = []
        rewards = []
        for _ in range(horizon):
            if is_abs[x]:
                break
            a = chain.row_ptr[x]
            cum = row_cum[x]
            j = int(np.searchsorted(cum, rng.random(), side="right"))
            if j >= cum.size:
                j = cum.size - 1
            states.append(int(chain.col[a + j]))
            actions.append(int(choice[x]))
            rewards.append(float(chain.rew[a + j]))
            x = states[-1]
        out.append(
            Trajectory(
                states=np.asarray(states, dtype=np.int64),
                actions=np.asarray(actions, dtype=np.int64),
                rewards=np.asarray(rewards, dtype=np.float64),
            )
        )
    return out
