"""Winner-determination algorithms (exact and suboptimal) and range analysis.

All algorithms are deterministic pure maps from a type profile to a valid
allocation.  Ties are always broken by the lexicographically smallest
allocation encoding: compare agent 0's bundle mask first, then agent 1's,
and so on.  Determinism is load-bearing: the strategic analysis in the
rest of the package replays allocations and compares them bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .core import (
    AffineWeights,
    Allocation,
    BudgetExceededError,
    Bundle,
    Money,
    SingleMindedValuation,
    TypeProfile,
    full_bundle,
    units,
    value_table,
    weighted_welfare,
    welfare,
)

# n * 2**m cap for the exact solver; allows m = 12 with up to 16 agents.
DEFAULT_WD_BUDGET = 16 * 4096

EXACT = "exact"
MAXIMAL_IN_RANGE = "maximal-in-range"
HEURISTIC = "heuristic"


@dataclass(frozen=True)
class AllocationAlgorithm:
    """A named deterministic allocation rule with its claimed optimality class."""

    name: str
    kind: str
    fn: Callable[[TypeProfile], Allocation]

    def __call__(self, profile: TypeProfile) -> Allocation:
        return self.fn(profile)


@dataclass(frozen=True)
class AllocationRange:
    """An explicit, finite optimization range of allocations."""

    allocations: tuple[Allocation, ...]

    def __post_init__(self) -> None:
        if not self.allocations:
            raise ValueError("allocation range must be non-empty")
        n = self.allocations[0].num_agents
        if any(a.num_agents != n for a in self.allocations):
            raise ValueError("all range allocations must cover the same agents")


@dataclass(frozen=True)
class RangeViolation:
    """A profile where an algorithm failed to optimize over its own realized range."""

    profile: TypeProfile
    produced: Allocation
    better: Allocation


@dataclass(frozen=True)
class ReasonablenessWitness:
    """An item solely desired by one agent that the algorithm gave away.

    ``item`` strictly increases ``agent``'s value in some context while every
    other agent is indifferent to it everywhere, yet ``allocation`` does not
    hand the item to ``agent``.
    """

    item: int
    agent: int
    profile: TypeProfile
    allocation: Allocation


def solve_optimal(profile: TypeProfile, *, budget: int = DEFAULT_WD_BUDGET) -> Allocation:
    """Exact welfare-maximizing allocation.

    Dynamic program over item subsets, agent by agent; O(n * 3**m) time. The
    returned allocation is the lexicographically smallest optimum, so ties on
    an all-zero profile resolve to the empty allocation.

    Raises:
        BudgetExceededError: if n * 2**m exceeds ``budget``.
    """
    n, m = profile.num_agents, profile.num_items
    size = 1 << m
    if n * size > budget:
        raise BudgetExceededError(f"winner determination size {n}*2^{m} exceeds budget {budget}")
    tables = [value_table(v) for v in profile.valuations]

    # best[k][mask]: max welfare achievable by agents k..n-1 using items in mask
    best = [[0] * size for _ in range(n + 1)]
    for k in reversed(range(n)):
        tk = tables[k]
        nxt = best[k + 1]
        row = best[k]
        for mask in range(size):
            top = tk[0] + nxt[mask]
            sub = mask
            while sub:
                cand = tk[sub] + nxt[mask ^ sub]
                if cand > top:
                    top = cand
                sub = (sub - 1) & mask
            row[mask] = top

    bundles = []
    remaining = size - 1
    for k in range(n):
        target = best[k][remaining]
        for sub in range(remaining + 1):
            if sub & remaining == sub and tables[k][sub] + best[k + 1][remaining ^ sub] == target:
                bundles.append(sub)
                remaining ^= sub
                break
    return Allocation(tuple(bundles))


def solve_single_winner(profile: TypeProfile) -> Allocation:
    """All items to the agent with the highest full-bundle value; ties to the lowest index.

    Guarantees at least a max(1/n, 1/m) fraction of the optimal welfare.
    """
    everything = full_bundle(profile.num_items)
    winner = max(range(profile.num_agents), key=lambda i: (profile[i].value(everything), -i))
    bundles = [0] * profile.num_agents
    bundles[winner] = everything
    return Allocation(tuple(bundles))


def _density_key(entry: tuple[int, Bundle, Money]):
    agent, mask, val = entry
    # Exact value/sqrt(|bundle|) ordering: compare squared densities as rationals.
    return (-Fraction(val * val, mask.bit_count()), -val, agent, mask)


def solve_greedy(profile: TypeProfile) -> Allocation:
    """Greedy bid acceptance by value/sqrt(bundle size) density.

    Each valuation is exploded into its atomic bids; bids are sorted by
    density (ties: larger value, then smaller agent index, then smaller
    bundle mask) and accepted when they conflict with nothing already
    accepted, at most one bid per agent.  Zero-value bids never appear.
    """
    entries = [
        (agent, mask, val)
        for agent, v in enumerate(profile.valuations)
        for mask, val in v.atoms()
    ]
    entries.sort(key=_density_key)
    bundles = [0] * profile.num_agents
    taken = 0
    served = set()
    for agent, mask, _ in entries:
        if agent in served or taken & mask:
            continue
        bundles[agent] = mask
        taken |= mask
        served.add(agent)
    return Allocation(tuple(bundles))


def solve_in_range(profile: TypeProfile, allocation_range: AllocationRange) -> Allocation:
    """Welfare-argmax over an explicit range; maximal in its range by construction."""
    best = None
    best_key = None
    for alloc in allocation_range.allocations:
        key = (-welfare(profile, alloc), alloc.bundles)
        if best_key is None or key < best_key:
            best, best_key = alloc, key
    assert best is not None
    return best


def iter_allocations(num_agents: int, num_items: int) -> Iterable[Allocation]:
    """All allocations, ascending in the (agent-major, bitmask-minor) encoding."""

    def rec(agent: int, taken: Bundle, bundles: list[Bundle]):
        if agent == num_agents:
            yield Allocation(tuple(bundles))
            return
        free = full_bundle(num_items) & ~taken
        for sub in range(1 << num_items):
            if sub & free != sub:
                continue
            bundles.append(sub)
            yield from rec(agent + 1, taken | sub, bundles)
            bundles.pop()

    yield from rec(0, 0, [])


def solve_optimal_weighted(
    weights: AffineWeights, profile: TypeProfile, *, budget: int = DEFAULT_WD_BUDGET
) -> Allocation:
    """Weighted-welfare-maximizing allocation by explicit enumeration.

    Enumerates all (n+1)**m allocations, so this is strictly a desk-scale
    tool; ties break to the lexicographically smallest encoding.
    """
    n, m = profile.num_agents, profile.num_items
    if (n + 1) ** m > budget:
        raise BudgetExceededError(f"weighted winner determination needs "
                                  f"{(n + 1) ** m} allocations, budget is {budget}")
    best = None
    best_key = None
    for alloc in iter_allocations(n, m):
        key = (-weighted_welfare(weights, profile, alloc), alloc.bundles)
        if best_key is None or key < best_key:
            best, best_key = alloc, key
    assert best is not None
    return best


def affine_optimal_algorithm(
    weights: AffineWeights, *, budget: int = DEFAULT_WD_BUDGET
) -> AllocationAlgorithm:
    return AllocationAlgorithm(
        "affine_optimal", EXACT, lambda p: solve_optimal_weighted(weights, p, budget=budget)
    )


def optimal_algorithm(*, budget: int = DEFAULT_WD_BUDGET) -> AllocationAlgorithm:
    return AllocationAlgorithm("optimal", EXACT, lambda p: solve_optimal(p, budget=budget))


def single_winner_algorithm() -> AllocationAlgorithm:
    return AllocationAlgorithm("single_winner", MAXIMAL_IN_RANGE, solve_single_winner)


def greedy_algorithm() -> AllocationAlgorithm:
    return AllocationAlgorithm("greedy", HEURISTIC, solve_greedy)


def in_range_algorithm(allocation_range: AllocationRange, *, name: str = "in_range") -> AllocationAlgorithm:
    return AllocationAlgorithm(
        name, MAXIMAL_IN_RANGE, lambda p: solve_in_range(p, allocation_range)
    )


def make_algorithm(name: str, *, allocation_range: AllocationRange | None = None,
                   budget: int = DEFAULT_WD_BUDGET) -> AllocationAlgorithm:
    """Resolve an algorithm by its public name."""
    if name == "optimal":
        return optimal_algorithm(budget=budget)
    if name == "single_winner":
        return single_winner_algorithm()
    if name == "greedy":
        return greedy_algorithm()
    if name == "in_range":
        if allocation_range is None:
            raise ValueError("in_range algorithm needs an explicit allocation range")
        return in_range_algorithm(allocation_range)
    raise ValueError(f"unknown allocation algorithm {name!r}")


def verify_maximal_in_range(
    alg: AllocationAlgorithm, profiles: Sequence[TypeProfile]
) -> RangeViolation | None:
    """Check range-optimality of ``alg`` over a finite profile grid.

    Computes the realized range of the algorithm over the grid, then verifies
    that every grid profile's output attains the maximum welfare over that
    range.  Returns the first violation in grid order, or None.
    """
    profiles = list(profiles)
    outputs = [alg(p) for p in profiles]
    realized: list[Allocation] = []
    seen = set()
    for out in outputs:
        if out.bundles not in seen:
            seen.add(out.bundles)
            realized.append(out)
    for profile, out in zip(profiles, outputs):
        achieved = welfare(profile, out)
        for candidate in realized:
            if welfare(profile, candidate) > achieved:
                return RangeViolation(profile, out, candidate)
    return None


def _desires(valuation, item: int) -> bool:
    """True if the item strictly increases the valuation in some context.

    Under free disposal an agent either desires an item in at least one
    context or is indifferent to it in every context.
    """
    table = value_table(valuation)
    bit = 1 << item
    for mask in range(len(table)):
        if mask & bit:
            continue
        if table[mask | bit] > table[mask]:
            return True
    return False


def check_reasonable(alg: AllocationAlgorithm, profile: TypeProfile) -> ReasonablenessWitness | None:
    """Find an item desired by exactly one agent that the algorithm withheld.

    For each item, the set of agents who desire it is computed; when that set
    is a single agent, the algorithm's allocation must hand the item to this
    agent.  Items are scanned in ascending order and the first violation is
    returned, or None if every solely-desired item is correctly allocated.
    """
    alloc = alg(profile)
    for item in range(profile.num_items):
        desiring = [i for i in range(profile.num_agents) if _desires(profile[i], item)]
        if len(desiring) != 1:
            continue
        agent = desiring[0]
        if not alloc.bundles[agent] >> item & 1:
            return ReasonablenessWitness(item, agent, profile, alloc)
    return None


def profile_from_partition(partition: Allocation, *, num_items: int | None = None) -> TypeProfile:
    """Unit single-minded bids, one per partition bundle.

    Each agent i wants exactly its bundle of the partition, for one currency
    unit; no two agents want the same item.  The welfare-optimal allocation
    of the resulting profile is exactly the partition.
    """
    if any(b == 0 for b in partition.bundles):
        raise ValueError("partition bundles must be non-empty")
    m = num_items if num_items is not None else partition.union().bit_length()
    if not partition.within_universe(m):
        raise ValueError("partition uses items outside the requested universe")
    return TypeProfile(
        tuple(SingleMindedValuation(m, b, units(1)) for b in partition.bundles)
    )


def iter_partitions(num_items: int) -> Iterable[Allocation]:
    """All set partitions of the item universe, each part becoming one agent.

    Parts are ordered by their smallest item, which makes the enumeration
    deterministic.
    """

    def rec(item: int, parts: list[int]):
        if item == num_items:
            yield Allocation(tuple(parts))
            return
        bit = 1 << item
        for k in range(len(parts)):
            parts[k] |= bit
            yield from rec(item + 1, parts)
            parts[k] ^= bit
        parts.append(bit)
        yield from rec(item + 1, parts)
        parts.pop()

    yield from rec(0, [])
