"""Benchmark domains and encoded figure fixtures.

build_liquidation constructs the optimal-liquidation MDP: sell inventory
q against a reflected trinomial price walk, with action masking that
forces at least one unit sold per step.  build_spiral builds the
25-state spiral lattice with a path-choice action at its three branch
states.  build_fig2 reproduces the two small reference chains.  The
shrinking-intervals process is a sampled continuous-state companion used
to sanity-check the drift arithmetic by Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidParams
from .mdp import MarkovChain, Mdp, gather_ranges
from .reachability import (
    AbsorbingDecomposition,
    LevelSetSchedule,
    absorbing_decomposition,
    counting_potential,
    level_set_schedule,
)

PROB_TOL = 1e-12


# ---------------------------------------------------------------------------
# Optimal liquidation


@dataclass(frozen=True)
class LiquidationParams:
    """Inventory bound, price grid, walk probabilities, reward weights.

    Defaults reproduce the reference configuration: q_max 100, prices in
    [50, 250] anchored at 150, a symmetric trinomial walk and weights
    (1, 0.2, 0.002).  Rewards are w0*u*(z - z0) - w1*u**2 - w2*q**2 with
    pre-trade inventory q.  The discount defaults to 1; termination comes
    from the masking, not from discounting.
    """

    q_max: int = 100
    z_min: int = 50
    z_max: int = 250
    z0: int = 150
    p_down: float = 0.4
    p_stay: float = 0.2
    p_up: float = 0.4
    w0: float = 1.0
    w1: float = 0.2
    w2: float = 0.002
    discount: float = 1.0

    def __post_init__(self):
        for name in ("q_max", "z_min", "z_max", "z0"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or isinstance(val, bool):
                raise InvalidParams(f"{name} must be an integer")
        if self.q_max <= 0:
            raise InvalidParams("q_max must be positive")
        if not 0 < self.z_min < self.z_max:
            raise InvalidParams("need 0 < z_min < z_max")
        if not self.z_min <= self.z0 <= self.z_max:
            raise InvalidParams("z0 must lie within the price bounds")
        probs = (self.p_down, self.p_stay, self.p_up)
        if min(probs) < 0.0:
            raise InvalidParams("walk probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > PROB_TOL:
            raise InvalidParams(f"walk probabilities sum to {sum(probs)!r}")
        if min(self.w0, self.w1, self.w2) < 0.0:
            raise InvalidParams("reward weights must be nonnegative")
        if not 0.0 <= self.discount <= 1.0:
            raise InvalidParams("discount must lie in [0, 1]")

    @property
    def z_count(self):
        return self.z_max - self.z_min + 1

    @property
    def state_count(self):
        return (self.q_max + 1) * self.z_count


def liquidation_state_id(params, q, z):
    """Dense id of inventory-price pair (q, z)."""
    if not 0 <= q <= params.q_max:
        raise InvalidParams(f"inventory {q} out of range")
    if not params.z_min <= z <= params.z_max:
        raise InvalidParams(f"price {z} out of range")
    return q * params.z_count + (z - params.z_min)


def liquidation_state(params, sid):
    """Inverse of liquidation_state_id."""
    if not 0 <= sid < params.state_count:
        raise InvalidParams(f"state id {sid} out of range")
    q, zi = divmod(int(sid), params.z_count)
    return q, zi + params.z_min


def liquidation_reward(params, q, z, u):
    """Reward of selling u units at price z holding pre-trade inventory q."""
    p = params
    return p.w0 * u * (z - p.z0) - p.w1 * u * u - p.w2 * q * q


def _price_rows(params):
    """Reflected trinomial rows per price index: (targets, probs) arrays.

    Mass that would leave the grid folds onto the boundary state; exact
    zero probabilities are dropped so the stored support stays strict.
    """
    Z = params.z_count
    moves = ((-1, params.p_down), (0, params.p_stay), (1, params.p_up))
    rows = []
    for zi in range(Z):
        acc = {}
        for dz, p in moves:
            if p <= 0.0:
                continue
            t = min(max(zi + dz, 0), Z - 1)
            acc[t] = acc.get(t, 0.0) + p
        targets = np.array(sorted(acc), dtype=np.int64)
        rows.append((targets, np.array([acc[t] for t in sorted(acc)])))
    return rows


def _price_slice_chain(params):
    rows = _price_rows(params)
    row_ptr = np.zeros(params.z_count + 1, dtype=np.int64)
    np.cumsum([t.size for t, _ in rows], out=row_ptr[1:])
    col = np.concatenate([t for t, _ in rows])
    prob = np.concatenate([p for _, p in rows])
    return MarkovChain(params.z_count, row_ptr, col, prob)


def build_liquidation(params):
    """Construct the liquidation MDP, its solve schedule and decomposition.

    Action u in U(q) = {1..q} sells u units (U(0) = {0}); the price moves
    by the reflected trinomial walk regardless.  The q = 0 slice keeps the
    price walk with reward 0 and forms the absorbing part; its classes are
    computed from the walk itself so degenerate probabilities (for example
    p_up = 0) stay handled.  The schedule groups states by inventory,
    ascending, which is a valid dependency order because every admissible
    action strictly decreases the inventory.
    """
    p = params
    Z = p.z_count
    zs = np.arange(p.z_min, p.z_max + 1, dtype=np.int64)
    price = _price_rows(p)
    pr_len = np.array([t.size for t, _ in price], dtype=np.int64)
    pr_ptr = np.zeros(Z + 1, dtype=np.int64)
    np.cumsum(pr_len, out=pr_ptr[1:])
    pr_zi = np.concatenate([t for t, _ in price])
    pr_p = np.concatenate([pb for _, pb in price])

    mask_sizes = [np.ones(Z, dtype=np.int64)]
    pair_actions = [np.zeros(Z, dtype=np.int64)]
    entry_lens = [pr_len]
    cols = [pr_zi]
    probs = [pr_p]
    rews = [np.zeros(pr_zi.size, dtype=np.float64)]

    for q in range(1, p.q_max + 1):
        idx_zi = np.repeat(np.arange(Z, dtype=np.int64), q)
        us = np.tile(np.arange(1, q + 1, dtype=np.int64), Z)
        pair_len = pr_len[idx_zi]
        eidx = gather_ranges(pr_ptr[idx_zi], pair_len)
        entry_pair = np.repeat(np.arange(idx_zi.size, dtype=np.int64), pair_len)
        cols.append((q - us)[entry_pair] * Z + pr_zi[eidx])
        probs.append(pr_p[eidx])
        rw = (
            p.w0 * us * (zs[idx_zi] - p.z0)
            - p.w1 * us.astype(np.float64) ** 2
            - p.w2 * float(q * q)
        )
        rews.append(rw[entry_pair])
        mask_sizes.append(np.full(Z, q, dtype=np.int64))
        pair_actions.append(us)
        entry_lens.append(pair_len)

    state_ptr = np.zeros(p.state_count + 1, dtype=np.int64)
    np.cumsum(np.concatenate(mask_sizes), out=state_ptr[1:])
    pair_action = np.concatenate(pair_actions)
    pair_ptr = np.zeros(pair_action.size + 1, dtype=np.int64)
    np.cumsum(np.concatenate(entry_lens), out=pair_ptr[1:])
    mdp = Mdp(
        state_count=p.state_count,
        action_count=p.q_max + 1,
        discount=p.discount,
        state_ptr=state_ptr,
        pair_action=pair_action,
        pair_ptr=pair_ptr,
        col=np.concatenate(cols),
        prob=np.concatenate(probs),
        rew=np.concatenate(rews),
    )

    slice_chain = _price_slice_chain(p)
    slice_decomp = absorbing_decomposition(slice_chain)
    slice_pt = counting_potential(slice_chain)
    slice_schedule = level_set_schedule(slice_pt, slice_decomp)

    transient = np.concatenate(
        [slice_decomp.transient, np.arange(Z, p.state_count, dtype=np.int64)]
    )
    absorbing = slice_decomp.absorbing.copy()
    classes = tuple(g.copy() for g in slice_decomp.classes)
    decomp = AbsorbingDecomposition(
        transient=np.sort(transient), absorbing=absorbing, classes=classes
    )

    levels = [lv.copy() for lv in slice_schedule.levels]
    for q in range(1, p.q_max + 1):
        levels.append(np.arange(q * Z, (q + 1) * Z, dtype=np.int64))
    schedule = LevelSetSchedule(levels=tuple(levels))
    return mdp, schedule, decomp


# ---------------------------------------------------------------------------
# Spiral lattice

SPIRAL_SIDE = 5
SPIRAL_ABSORBING = (2, 2)

# Edge set of the spiral walk, keyed by (col, row) with row 0 at the top;
# east is +col, south is +row.
SPIRAL_EDGES = {
    (0, 0): ((1, 0),),
    (1, 0): ((2, 0),),
    (2, 0): ((3, 0), (2, 1)),
    (3, 0): ((4, 0),),
    (4, 0): ((4, 1),),
    (0, 1): ((1, 1),),
    (1, 1): ((2, 1),),
    (2, 1): ((3, 1), (2, 2)),
    (3, 1): ((3, 2),),
    (4, 1): ((4, 2),),
    (0, 2): ((0, 1),),
    (1, 2): ((2, 2),),
    (2, 2): ((2, 2),),
    (3, 2): ((3, 3),),
    (4, 2): ((4, 3),),
    (0, 3): ((0, 2),),
    (1, 3): ((1, 2),),
    (2, 3): ((1, 3), (2, 2)),
    (3, 3): ((2, 3),),
    (4, 3): ((4, 4),),
    (0, 4): ((0, 3),),
    (1, 4): ((0, 4),),
    (2, 4): ((1, 4),),
    (3, 4): ((2, 4),),
    (4, 4): ((3, 4),),
}


def spiral_state_id(x, y):
    """Dense id of lattice site (x, y): row-major with row 0 first."""
    if not (0 <= x < SPIRAL_SIDE and 0 <= y < SPIRAL_SIDE):
        raise InvalidParams(f"lattice site ({x}, {y}) out of range")
    return SPIRAL_SIDE * y + x


def spiral_chain():
    """The spiral walk as a chain: branch states split mass half and half."""
    n = SPIRAL_SIDE * SPIRAL_SIDE
    rows = [None] * n
    for (x, y), succs in SPIRAL_EDGES.items():
        share = 1.0 / len(succs)
        rows[spiral_state_id(x, y)] = [
            (spiral_state_id(*s), share) for s in succs
        ]
    return MarkovChain.from_rows(rows)


def build_spiral(step_reward=-1.0, mix_levels=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """Spiral MDP: the action picks how strongly to prefer the short path.

    Action a stands for the mixing weight mix_levels[a]: at a branch state
    it sends that probability to the lower-potential successor and the
    rest to the other; elsewhere the action changes nothing.  Every
    transient transition pays step_reward; the absorbing site pays 0.
    Weight-0 or weight-1 actions drop the zero-probability edge.
    """
    if len(mix_levels) == 0:
        raise InvalidParams("mix_levels must not be empty")
    mixes = [float(u) for u in mix_levels]
    if any(not 0.0 <= u <= 1.0 for u in mixes):
        raise InvalidParams("mix levels must lie in [0, 1]")

    chain = spiral_chain()
    pt = counting_potential(chain)
    decomp = absorbing_decomposition(chain)
    schedule = level_set_schedule(pt, decomp)
    n = chain.state_count
    absorbing_id = spiral_state_id(*SPIRAL_ABSORBING)

    state_ptr = np.arange(0, (n + 1) * len(mixes), len(mixes), dtype=np.int64)
    pair_action = np.tile(np.arange(len(mixes), dtype=np.int64), n)
    entry_cols = []
    entry_probs = []
    entry_rews = []
    entry_lens = []
    for sid in range(n):
        x, y = sid % SPIRAL_SIDE, sid // SPIRAL_SIDE
        succs = [spiral_state_id(*s) for s in SPIRAL_EDGES[(x, y)]]
        reward = 0.0 if sid == absorbing_id else float(step_reward)
        for u in mixes:
            if len(succs) == 1:
                row = [(succs[0], 1.0)]
            else:
                lo, hi = sorted(succs, key=lambda s: int(pt.phi[s]))
                row = [(lo, u), (hi, 1.0 - u)]
                row = [(s, pr) for s, pr in row if pr > 0.0]
                row.sort()
            entry_lens.append(len(row))
            entry_cols.extend(s for s, _ in row)
            entry_probs.extend(pr for _, pr in row)
            entry_rews.extend(reward for _ in row)
    pair_ptr = np.zeros(pair_action.size + 1, dtype=np.int64)
    np.cumsum(entry_lens, out=pair_ptr[1:])
    mdp = Mdp(
        state_count=n,
        action_count=len(mixes),
        discount=1.0,
        state_ptr=state_ptr,
        pair_action=pair_action,
        pair_ptr=pair_ptr,
        col=np.array(entry_cols, dtype=np.int64),
        prob=np.array(entry_probs, dtype=np.float64),
        rew=np.array(entry_rews, dtype=np.float64),
    )
    return mdp, schedule, decomp


# ---------------------------------------------------------------------------
# Reference chains


def build_fig2(variant, loop_prob=0.5):
    """The two small reference chains, uniform split over non-loop mass.

    Variant A: 4 states, edges 0 -> {1,2,3} (uniform after the loop),
    1 -> 3, 2 -> 3, a fractional self-loop on 0 and a certain one on 3.
    Variant B: 5 states, 0 -> {1,2}, 1 -> 3, 2 -> 4, and {3,4} a closed
    two-state class with fractional self-loops.
    """
    if not 0.0 < loop_prob < 1.0:
        raise InvalidParams("loop_prob must lie strictly between 0 and 1")
    v = str(variant).upper()
    if v == "A":
        rest = (1.0 - loop_prob) / 3.0
        rows = [
            [(0, loop_prob), (1, rest), (2, rest), (3, rest)],
            [(3, 1.0)],
            [(3, 1.0)],
            [(3, 1.0)],
        ]
    elif v == "B":
        rows = [
            [(1, 0.5), (2, 0.5)],
            [(3, 1.0)],
            [(4, 1.0)],
            [(3, loop_prob), (4, 1.0 - loop_prob)],
            [(3, 1.0 - loop_prob), (4, loop_prob)],
        ]
    else:
        raise InvalidParams(f"unknown variant {variant!r}")
    return MarkovChain.from_rows(rows)


# ---------------------------------------------------------------------------
# Shrinking intervals

MULTIPLICATIVE = "Multiplicative"
DELTA_INTERVAL = "DeltaInterval"


@dataclass(frozen=True)
class ShrinkParams:
    trials: int
    steps: int
    seed: int
    mode: str = MULTIPLICATIVE
    delta: float | None = None

    def __post_init__(self):
        if self.trials < 1 or self.steps < 1:
            raise InvalidParams("trials and steps must be at least 1")
        if self.mode not in (MULTIPLICATIVE, DELTA_INTERVAL):
            raise InvalidParams(f"unknown mode {self.mode!r}")
        if self.mode == DELTA_INTERVAL:
            if self.delta is None or not 0.0 < self.delta < 1.0:
                raise InvalidParams("delta must lie in (0, 1)")


@dataclass(frozen=True)
class ShrinkResult:
    final_abs: np.ndarray
    max_final: float
    all_monotone: bool


def shrink_simulate(params):
    """Sample the shrinking-intervals process from X_0 = 1.

    Multiplicative mode multiplies by an independent Uniform[0,1) each
    step; DeltaInterval draws uniformly from [0, max(X - delta, 0)].
    Trials use spawned per-trial seeds, so results are reproducible and
    independent of any execution partitioning.  Monotonicity is checked
    on the sampled paths, not assumed.
    """
    children = np.random.SeedSequence(params.seed).spawn(params.trials)
    finals = np.empty(params.trials, dtype=np.float64)
    all_monotone = True
    for t in range(params.trials):
        rng = np.random.Generator(np.random.PCG64(children[t]))
        if params.mode == MULTIPLICATIVE:
            path = np.cumprod(rng.random(params.steps))
            if path[0] > 1.0 or np.any(np.diff(path) > 0.0):
                all_monotone = False
            finals[t] = path[-1]
        else:
            x = 1.0
            monotone = True
            for _ in range(params.steps):
                nxt = rng.random() * max(x - params.delta, 0.0)
                if nxt > x:
                    monotone = False
                x = nxt
            if not monotone:
                all_monotone = False
            finals[t] = x
    final_abs = np.abs(finals)
    return ShrinkResult(
        final_abs=final_abs,
        max_final=float(final_abs.max()),
        all_monotone=all_monotone,
    )


def shrink_expected_drift(x, delta):
    """Expected one-step decrease of the interval length at X = x.

    For X' uniform on [0, x - delta] the conditional mean decrease is
    (x + delta) / 2.  Defined for x in (delta, 1].
    """
    if delta < 0.0:
        raise DomainError("delta must be nonnegative")
    if not delta < x <= 1.0:
        raise DomainError(f"x must lie in ({delta}, 1]")
    return (x + delta) / 2.0
