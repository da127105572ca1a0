"""Reachability analysis and reductivity certification.

Computes forward-reachable sets, the counting-measure potential, the
transient/absorbing decomposition, reductivity verdicts with concrete
counterexample edges, the canonical block-triangular permutation, and the
level-set schedule that drives the one-pass solver.

The potential phi(x) counts the states reachable from x.  A chain is
reductive when it has a nonempty absorbing part and phi strictly
decreases along every transient transition except self-loops.  On finite
chains that is equivalent to every transient strongly-connected component
being a singleton, which is how the verdict is computed.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ModelError, NotReductive
from .mdp import gather_ranges

# Violation kinds reported in a ReductivityVerdict.
NO_ABSORBING_SET = "NoAbsorbingSet"
NON_DECREASING_TRANSIENT = "NonDecreasingTransient"
CERTAIN_SELF_LOOP_MARKED_TRANSIENT = "CertainSelfLoopMarkedTransient"

# Policy-invariance check on a multi-action absorbing class enumerates at
# most this many joint action choices before falling back to a
# conservative rejection.
_CLASS_ENUM_CAP = 4096


@dataclass(frozen=True)
class Violation:
    """One edge (or state) witnessing a failure of the drift condition."""

    x: int
    xp: int
    kind: str


@dataclass(frozen=True)
class ReductivityVerdict:
    reductive: bool
    violations: tuple[Violation, ...]


@dataclass(frozen=True)
class AbsorbingDecomposition:
    """Partition into transient states and closed, strongly-connected classes.

    transient and absorbing are ascending state-id arrays; classes lists
    the absorbing states grouped by class, ordered by minimum member id.
    """

    transient: np.ndarray
    absorbing: np.ndarray
    classes: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class PotentialTable:
    """Counting-measure potential per state plus the fractional self-loop set.

    phi[x] is the number of states reachable from x (x included).
    self_loops holds every state with 0 < p(x, x) < 1.
    """

    phi: np.ndarray
    self_loops: frozenset[int]


@dataclass(frozen=True)
class CanonicalPermutation:
    """State order making the transition matrix block upper-triangular."""

    order: np.ndarray


@dataclass(frozen=True)
class LevelSetSchedule:
    """Solve groups in dependency order.

    When built from a PotentialTable the groups are the potential level
    sets in ascending order; domain builders may return coarser groups as
    long as every transition from a group lands in an earlier group or in
    the absorbing part.
    """

    levels: tuple[np.ndarray, ...]


def _scc_labels(chain):
    mat = csr_matrix(
        (chain.prob, chain.col, chain.row_ptr),
        shape=(chain.state_count, chain.state_count),
    )
    n_comp, labels = connected_components(mat, directed=True, connection="strong")
    return n_comp, labels.astype(np.int64)


def _entry_sources(chain):
    return np.repeat(
        np.arange(chain.state_count, dtype=np.int64), np.diff(chain.row_ptr)
    )


def _open_components(chain, n_comp, labels):
    """Boolean flag per component: has an edge leaving the component."""
    src_comp = labels[_entry_sources(chain)]
    dst_comp = labels[chain.col]
    is_open = np.zeros(n_comp, dtype=bool)
    is_open[src_comp[src_comp != dst_comp]] = True
    return is_open


def reachable_set(chain, x):
    """Smallest successor-closed set of states containing x."""
    if not 0 <= x < chain.state_count:
        raise ModelError(f"state {x} out of range")
    seen = np.zeros(chain.state_count, dtype=bool)
    seen[x] = True
    frontier = [x]
    while frontier:
        nxt = []
        for s in frontier:
            for c in chain.col[chain.row_ptr[s] : chain.row_ptr[s + 1]]:
                if not seen[c]:
                    seen[c] = True
                    nxt.append(int(c))
        frontier = nxt
    return set(np.where(seen)[0].tolist())


def _set_bits(row, states):
    words = (states >> 6).astype(np.int64)
    bits = np.uint64(1) << (states & 63).astype(np.uint64)
    np.bitwise_or.at(row, words, bits)


def counting_potential(chain):
    """Number of reachable states per state, via one condensation pass.

    Strongly-connected components are condensed, ordered topologically,
    and reach sets are propagated as bitsets from successors to
    predecessors; a component's set is freed once every predecessor has
    consumed it, so memory stays bounded on large chains.  The result is
    exact at every size.
    """
    n = chain.state_count
    n_comp, labels = _scc_labels(chain)

    src_comp = labels[_entry_sources(chain)]
    dst_comp = labels[chain.col]
    cross = src_comp != dst_comp
    if np.any(cross):
        keys = np.unique(src_comp[cross] * np.int64(n_comp) + dst_comp[cross])
        edge_src = keys // n_comp
        edge_dst = keys % n_comp
    else:
        edge_src = np.empty(0, dtype=np.int64)
        edge_dst = np.empty(0, dtype=np.int64)

    succ_ptr = np.zeros(n_comp + 1, dtype=np.int64)
    np.cumsum(np.bincount(edge_src, minlength=n_comp), out=succ_ptr[1:])
    # edge_src is sorted, so edge_dst is already grouped by source.
    graph = {
        c: edge_dst[succ_ptr[c] : succ_ptr[c + 1]].tolist() for c in range(n_comp)
    }
    topo = graphlib.TopologicalSorter(graph).static_order()

    members = {c: [] for c in range(n_comp)}
    for x, c in enumerate(labels):
        members[int(c)].append(x)
    pending = np.bincount(edge_dst, minlength=n_comp).astype(np.int64)

    words = (n + 63) >> 6
    sets = {}
    phi_comp = np.zeros(n_comp, dtype=np.int64)
    for c in topo:
        row = np.zeros(words, dtype=np.uint64)
        _set_bits(row, np.asarray(members[c], dtype=np.int64))
        for d in graph[c]:
            row |= sets[d]
        phi_comp[c] = int(np.bitwise_count(row).sum())
        sets[c] = row
        for d in graph[c]:
            pending[d] -= 1
            if pending[d] == 0:
                del sets[d]

    phi = phi_comp[labels]
    diag = _self_loop_probs(chain)
    loops = np.where((diag > 0.0) & (diag < 1.0))[0]
    return PotentialTable(phi=phi, self_loops=frozenset(int(x) for x in loops))


def _self_loop_probs(chain):
    diag = np.zeros(chain.state_count, dtype=np.float64)
    src = _entry_sources(chain)
    on_diag = src == chain.col
    diag[src[on_diag]] = chain.prob[on_diag]
    return diag


def potential_difference(pt, x, xp):
    """phi[xp] - phi[x]; at most 0 whenever xp is a one-step successor of x."""
    return int(pt.phi[xp] - pt.phi[x])


def self_loop_states(chain, subset=None):
    """States with a fractional self-loop, 0 < p(x, x) < 1.

    Intersected with subset when one is given.
    """
    diag = _self_loop_probs(chain)
    loops = set(np.where((diag > 0.0) & (diag < 1.0))[0].tolist())
    if subset is not None:
        loops &= {int(s) for s in subset}
    return loops


def absorbing_decomposition(chain):
    """Split states into the transient part and the closed classes.

    Classes are exactly the strongly-connected components with no outgoing
    edges; everything else is transient.
    """
    n_comp, labels = _scc_labels(chain)
    is_open = _open_components(chain, n_comp, labels)
    transient = np.where(is_open[labels])[0].astype(np.int64)
    absorbing = np.where(~is_open[labels])[0].astype(np.int64)
    closed = np.where(~is_open)[0]
    groups = []
    for c in closed:
        groups.append(np.where(labels == c)[0].astype(np.int64))
    groups.sort(key=lambda g: int(g[0]))
    return AbsorbingDecomposition(
        transient=transient, absorbing=absorbing, classes=tuple(groups)
    )


def _transient_cycle_violations(chain, n_comp, labels, is_open):
    """All intra-component non-self edges of multi-state open components."""
    src = _entry_sources(chain)
    comp_sizes = np.bincount(labels, minlength=n_comp)
    bad_comp = is_open & (comp_sizes >= 2)
    mask = bad_comp[labels[src]] & (labels[src] == labels[chain.col]) & (
        src != chain.col
    )
    edges = sorted(zip(src[mask].tolist(), chain.col[mask].tolist()))
    return [Violation(int(x), int(xp), NON_DECREASING_TRANSIENT) for x, xp in edges]


def verify_reductive(chain):
    """Certify the drift condition, reporting counterexample edges if any.

    Reductive means: nonempty absorbing part, and along every stored
    transient transition other than a self-loop the potential strictly
    decreases.  An edge x -> xp fails exactly when xp can reach back to x,
    i.e. when both ends share a multi-state strongly-connected component
    that is not closed, so the verdict needs no potential values.
    """
    n_comp, labels = _scc_labels(chain)
    is_open = _open_components(chain, n_comp, labels)
    violations = _transient_cycle_violations(chain, n_comp, labels, is_open)
    if not np.any(~is_open):
        # Unreachable for row-stochastic inputs: a finite chain always has
        # at least one closed component.  Kept as a defensive report.
        violations.append(Violation(0, 0, NO_ABSORBING_SET))
    diag = _self_loop_probs(chain)
    certain = np.where((diag == 1.0) & is_open[labels])[0]
    for x in certain:
        # Also unreachable: p(x,x)=1 makes {x} a closed component.
        violations.append(Violation(int(x), int(x), CERTAIN_SELF_LOOP_MARKED_TRANSIENT))
    return ReductivityVerdict(
        reductive=not violations, violations=tuple(violations)
    )


def _cycle_at_state(chain, x, seeds):
    """True when x is reachable from any seed via the chain's edges."""
    seen = np.zeros(chain.state_count, dtype=bool)
    frontier = []
    for s in seeds:
        if s == x:
            continue
        if not seen[s]:
            seen[s] = True
            frontier.append(int(s))
    while frontier:
        nxt = []
        for s in frontier:
            for c in chain.col[chain.row_ptr[s] : chain.row_ptr[s + 1]]:
                if c == x:
                    return True
                if not seen[c]:
                    seen[c] = True
                    nxt.append(int(c))
        frontier = nxt
    return False


def _class_invariance_violations(mdp, union, block):
    """Check one multi-state closed class against every restricted policy.

    A class stays valid under a policy only if no strict subset turns into
    a cycle with an exit.  Free states (more than one admissible action)
    are enumerated jointly up to a cap; past the cap the class is rejected
    conservatively with its free-state edges as witnesses.
    """
    free = [x for x in block if mdp.state_ptr[x + 1] - mdp.state_ptr[x] > 1]
    if not free:
        return []
    combos = 1
    for x in free:
        combos *= int(mdp.state_ptr[x + 1] - mdp.state_ptr[x])
        if combos > _CLASS_ENUM_CAP:
            out = []
            for x in free:
                ua, ub = mdp.state_ptr[x], mdp.state_ptr[x + 1]
                lo, hi = mdp.pair_ptr[ua], mdp.pair_ptr[ub]
                for xp in np.unique(mdp.col[lo:hi]):
                    if xp != x:
                        out.append(Violation(int(x), int(xp), NON_DECREASING_TRANSIENT))
            return out

    local = {int(s): i for i, s in enumerate(block)}
    m = len(block)
    fixed_rows = []
    for s in block:
        a, b = mdp.state_ptr[s], mdp.state_ptr[s + 1]
        lo, hi = mdp.pair_ptr[a], mdp.pair_ptr[b]
        fixed_rows.append(np.unique(mdp.col[lo:hi]))
    free_choices = []
    for x in free:
        rows = []
        for i in range(mdp.state_ptr[x], mdp.state_ptr[x + 1]):
            rows.append(np.unique(mdp.col[mdp.pair_ptr[i] : mdp.pair_ptr[i + 1]]))
        free_choices.append(rows)

    def assignments(k):
        if k == len(free):
            yield []
            return
        for row in free_choices[k]:
            for rest in assignments(k + 1):
                yield [row] + rest

    out = []
    for chosen in assignments(0):
        rows = list(fixed_rows)
        for x, row in zip(free, chosen):
            rows[local[x]] = row
        indptr = np.zeros(m + 1, dtype=np.int64)
        cols = []
        for i, row in enumerate(rows):
            cols.append(np.asarray([local[int(c)] for c in row], dtype=np.int64))
            indptr[i + 1] = indptr[i] + row.size
        cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
        mat = csr_matrix(
            (np.ones(cols.size), cols, indptr), shape=(m, m)
        )
        n_comp, labels = connected_components(mat, directed=True, connection="strong")
        sizes = np.bincount(labels, minlength=n_comp)
        src = np.repeat(np.arange(m, dtype=np.int64), np.diff(indptr))
        is_open = np.zeros(n_comp, dtype=bool)
        cross = labels[src] != labels[cols]
        is_open[labels[src[cross]]] = True
        bad = is_open & (sizes >= 2)
        if np.any(bad):
            sel = bad[labels[src]] & (labels[src] == labels[cols]) & (src != cols)
            for i, j in zip(src[sel], cols[sel]):
                out.append(
                    Violation(int(block[i]), int(block[j]), NON_DECREASING_TRANSIENT)
                )
    return sorted(set(out), key=lambda v: (v.x, v.xp))


def verify_reductive_mdp(mdp):
    """Certify that every deterministic policy induces a reductive chain.

    Checks the union-support chain.  Transient-side cycles found there are
    re-tested against single-action deviations before being reported: a
    state's violations are dropped only if no admissible action can close
    a cycle through it.  Multi-state absorbing classes of the union chain
    additionally get a policy-invariance check, since a policy could turn
    a strict subset of such a class into a transient cycle.
    """
    union = mdp.union_chain()
    base = verify_reductive(union)

    violations = []
    by_state = {}
    for v in base.violations:
        if v.kind == NON_DECREASING_TRANSIENT:
            by_state.setdefault(v.x, []).append(v)
        else:
            violations.append(v)
    for x, vs in by_state.items():
        cycle_possible = False
        for i in range(mdp.state_ptr[x], mdp.state_ptr[x + 1]):
            seeds = mdp.col[mdp.pair_ptr[i] : mdp.pair_ptr[i + 1]]
            if _cycle_at_state(union, x, seeds):
                cycle_possible = True
                break
        if cycle_possible:
            violations.extend(vs)

    decomp = absorbing_decomposition(union)
    for block in decomp.classes:
        if block.size >= 2:
            violations.extend(_class_invariance_violations(mdp, union, block))

    violations = sorted(set(violations), key=lambda v: (v.kind, v.x, v.xp))
    return ReductivityVerdict(
        reductive=not violations, violations=tuple(violations)
    )


def canonical_permutation(chain, decomp, pt):
    """Permutation: transient by descending potential, then grouped classes.

    Under the returned order the transient block of the permuted matrix is
    upper-triangular (self-loops on the diagonal) and absorbing rows carry
    no mass into transient columns.  Ties in the transient potential are
    broken by ascending state id, which is safe because equal-potential
    transient states of a reductive chain are never adjacent.
    """
    verdict = verify_reductive(chain)
    if not verdict.reductive:
        raise NotReductive(
            f"chain is not reductive ({len(verdict.violations)} violations)"
        )
    transient = decomp.transient
    order_t = transient[np.lexsort((transient, -pt.phi[transient]))]
    blocks = sorted(decomp.classes, key=lambda g: int(g[0]))
    parts = [order_t] + [np.sort(g) for g in blocks]
    order = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return CanonicalPermutation(order=order.astype(np.int64))


def level_set_schedule(pt, decomp):
    """Transient states bucketed by potential value, buckets ascending."""
    transient = decomp.transient
    if transient.size == 0:
        return LevelSetSchedule(levels=())
    phis = pt.phi[transient]
    order = np.lexsort((transient, phis))
    sorted_states = transient[order]
    sorted_phis = phis[order]
    cuts = np.where(np.diff(sorted_phis) != 0)[0] + 1
    levels = np.split(sorted_states, cuts)
    return LevelSetSchedule(levels=tuple(levels))


def predecessors(chain, target, n):
    """States outside target that can hit it within n steps."""
    if n < 1:
        raise ModelError("n must be at least 1")
    in_target = np.zeros(chain.state_count, dtype=bool)
    for s in target:
        in_target[s] = True
    order = np.argsort(chain.col, kind="stable")
    src_sorted = _entry_sources(chain)[order]
    col_sorted = chain.col[order]
    rev_ptr = np.zeros(chain.state_count + 1, dtype=np.int64)
    np.cumsum(
        np.bincount(chain.col, minlength=chain.state_count), out=rev_ptr[1:]
    )

    seen = in_target.copy()
    frontier = np.where(in_target)[0]
    found = []
    for _ in range(n):
        if frontier.size == 0:
            break
        starts = rev_ptr[frontier]
        lengths = rev_ptr[frontier + 1] - starts
        preds = src_sorted[gather_ranges(starts, lengths)]
        preds = np.unique(preds[~seen[preds]])
        seen[preds] = True
        found.append(preds)
        frontier = preds
    if not found:
        return set()
    return set(np.concatenate(found).tolist())
