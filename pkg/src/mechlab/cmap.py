"""Cost-minimization allocation problems: instances, solvers, degeneracy tooling.

An instance fixes per-agent component counts and a set of allowable outputs,
each output a flat 0/1 vector over all components in agent-major order.
Types assign a value (typically a negated cost, so <= 0) to every component;
the welfare of an output is the sum of the selected components' values and
the goal is to maximize it, i.e. minimize total cost.

Graph-derived instances model procurement on a network whose edges are
privately owned: outputs are either source-rooted trees covering a terminal
set (multicast) or source-to-target paths.  The suboptimal rules here are
deliberately cost-blind, so escalating the cost of every component outside
the optimum drives their normalized welfare gap arbitrarily high.
"""

from __future__ import annotations

import heapq
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .core import BudgetExceededError, Money

CmapType = tuple[tuple[Money, ...], ...]
CmapOutput = tuple[int, ...]

MULTICAST = "multicast"
PATH = "path"

# Enumeration cap: graph instances beyond this many edges need label-setting.
ENUM_EDGE_LIMIT = 12


class CmapInstance(ABC):
    """Allowable-output structure shared by explicit and graph-derived instances."""

    @property
    @abstractmethod
    def component_counts(self) -> tuple[int, ...]: ...

    @property
    def num_agents(self) -> int:
        return len(self.component_counts)

    @property
    def total_components(self) -> int:
        return sum(self.component_counts)

    @abstractmethod
    def is_allowable(self, output: CmapOutput) -> bool: ...

    @abstractmethod
    def outputs(self) -> tuple[CmapOutput, ...]:
        """All allowable outputs, deterministically ordered."""

    def split(self, output: CmapOutput) -> tuple[tuple[int, ...], ...]:
        """Partition a flat output vector into per-agent slices."""
        parts = []
        at = 0
        for count in self.component_counts:
            parts.append(tuple(output[at:at + count]))
            at += count
        return tuple(parts)

    def check_type(self, v: CmapType) -> None:
        if len(v) != self.num_agents:
            raise ValueError(f"type covers {len(v)} agents, instance has {self.num_agents}")
        for i, (vec, count) in enumerate(zip(v, self.component_counts)):
            if len(vec) != count:
                raise ValueError(f"agent {i} type has {len(vec)} components, expected {count}")


@dataclass(frozen=True)
class ExplicitCmap(CmapInstance):
    """An instance given by an explicit enumeration of its allowable outputs."""

    counts: tuple[int, ...]
    allowable: tuple[CmapOutput, ...]

    def __post_init__(self) -> None:
        if not self.allowable:
            raise ValueError("instance needs at least one allowable output")
        total = sum(self.counts)
        for x in self.allowable:
            if len(x) != total or any(bit not in (0, 1) for bit in x):
                raise ValueError(f"output {x} is not a 0/1 vector of length {total}")

    @property
    def component_counts(self) -> tuple[int, ...]:
        return self.counts

    def is_allowable(self, output: CmapOutput) -> bool:
        return tuple(output) in set(self.allowable)

    def outputs(self) -> tuple[CmapOutput, ...]:
        return self.allowable


@dataclass(frozen=True)
class GraphEdge:
    tail: int
    head: int
    owner: int
    cost: Money

    def __post_init__(self) -> None:
        if self.owner < 0:
            raise ValueError("edge owner must be a non-negative agent index")


@dataclass(frozen=True)
class GraphCmap(CmapInstance):
    """A procurement instance on a directed graph with privately owned edges.

    Components are edges, grouped by owner in edge input order; the flat
    output layout is agent-major.  ``structure`` selects the allowable-output
    family: source-rooted trees covering every terminal, or simple paths from
    the source to the single terminal.  Instances where some agent owns a cut
    (its removal disconnects a terminal) are rejected outright.
    """

    num_nodes: int
    edges: tuple[GraphEdge, ...]
    source: int
    terminals: tuple[int, ...]
    structure: str

    def __post_init__(self) -> None:
        if self.structure not in (MULTICAST, PATH):
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.structure == PATH and len(self.terminals) != 1:
            raise ValueError("path instances need exactly one terminal")
        if not self.terminals:
            raise ValueError("need at least one terminal")
        nodes = range(self.num_nodes)
        if self.source not in nodes or any(t not in nodes for t in self.terminals):
            raise ValueError("source/terminals must be nodes of the graph")
        if not self.edges:
            raise ValueError("graph instance needs at least one edge")
        if not self._reaches_terminals(self.edges):
            raise ValueError("terminals unreachable from the source")
        for agent in range(self.num_agents):
            rest = tuple(e for e in self.edges if e.owner != agent)
            if not self._reaches_terminals(rest):
                raise ValueError(f"agent {agent} owns a cut; instance rejected")

    def _reaches_terminals(self, edges: Sequence[GraphEdge]) -> bool:
        reached = {self.source}
        frontier = [self.source]
        while frontier:
            node = frontier.pop()
            for e in edges:
                if e.tail == node and e.head not in reached:
                    reached.add(e.head)
                    frontier.append(e.head)
        return all(t in reached for t in self.terminals)

    @property
    def component_counts(self) -> tuple[int, ...]:
        owners = max(e.owner for e in self.edges) + 1
        counts = [0] * owners
        for e in self.edges:
            counts[e.owner] += 1
        return tuple(counts)

    def component_index(self, edge_pos: int) -> int:
        """Flat component index of the edge at input position ``edge_pos``."""
        counts = self.component_counts
        owner = self.edges[edge_pos].owner
        base = sum(counts[:owner])
        within = sum(1 for e in self.edges[:edge_pos] if e.owner == owner)
        return base + within

    def output_from_edges(self, edge_positions: Iterable[int]) -> CmapOutput:
        bits = [0] * self.total_components
        for pos in edge_positions:
            bits[self.component_index(pos)] = 1
        return tuple(bits)

    def edges_from_output(self, output: CmapOutput) -> tuple[int, ...]:
        return tuple(
            pos for pos in range(len(self.edges)) if output[self.component_index(pos)]
        )

    def seed_type(self) -> CmapType:
        """The instance's declared costs, as a type (values are negated costs)."""
        per_agent: list[list[Money]] = [[] for _ in range(self.num_agents)]
        for e in self.edges:
            per_agent[e.owner].append(-e.cost)
        return tuple(tuple(vec) for vec in per_agent)

    def is_allowable(self, output: CmapOutput) -> bool:
        if len(output) != self.total_components or any(b not in (0, 1) for b in output):
            return False
        selected = self.edges_from_output(tuple(output))
        if self.structure == PATH:
            return self._is_simple_path(selected)
        return self._is_covering_tree(selected)

    def _is_simple_path(self, selected: tuple[int, ...]) -> bool:
        target = self.terminals[0]
        if not selected:
            return self.source == target
        remaining = set(selected)
        node = self.source
        visited = {node}
        while remaining:
            steps = [pos for pos in remaining if self.edges[pos].tail == node]
            if len(steps) != 1:
                return False
            pos = steps[0]
            node = self.edges[pos].head
            if node in visited:
                return False
            visited.add(node)
            remaining.remove(pos)
        return node == target

    def _is_covering_tree(self, selected: tuple[int, ...]) -> bool:
        indegree: dict[int, int] = {}
        for pos in selected:
            head = self.edges[pos].head
            indegree[head] = indegree.get(head, 0) + 1
            if indegree[head] > 1:
                return False
        if indegree.get(self.source, 0) > 0:
            return False
        # grow from the source; every selected edge must hang off the root
        reached = {self.source}
        pending = set(selected)
        progress = True
        while progress:
            progress = False
            for pos in sorted(pending):
                if self.edges[pos].tail in reached:
                    reached.add(self.edges[pos].head)
                    pending.remove(pos)
                    progress = True
                    break
        if pending:
            return False
        return all(t == self.source or indegree.get(t, 0) == 1 for t in self.terminals)

    def outputs(self) -> tuple[CmapOutput, ...]:
        if len(self.edges) > ENUM_EDGE_LIMIT:
            raise BudgetExceededError(
                f"{len(self.edges)} edges exceed the enumeration limit of {ENUM_EDGE_LIMIT}"
            )
        found = []
        for mask in range(1 << len(self.edges)):
            selected = tuple(pos for pos in range(len(self.edges)) if mask >> pos & 1)
            output = self.output_from_edges(selected)
            if self.is_allowable(output):
                found.append(output)
        return tuple(sorted(found))


@dataclass(frozen=True)
class CmapAlgorithm:
    """A named deterministic output rule for cost-minimization instances."""

    name: str
    kind: str
    fn: Callable[[CmapInstance, CmapType], CmapOutput]

    def __call__(self, instance: CmapInstance, v: CmapType) -> CmapOutput:
        return self.fn(instance, v)


def cmap_welfare(instance: CmapInstance, v: CmapType, output: CmapOutput) -> Money:
    """Sum of selected component values (negated total cost), exact."""
    instance.check_type(v)
    if not instance.is_allowable(output):
        raise ValueError(f"output {output} is not allowable for this instance")
    flat = [value for vec in v for value in vec]
    return sum(value for value, bit in zip(flat, output) if bit)


def _dijkstra_path(instance: GraphCmap, v: CmapType) -> CmapOutput:
    """Exact label-setting for path instances of any size.

    Labels are (accumulated cost, output bit vector); extending a smaller
    label by an edge keeps it smaller, so settling nodes in label order also
    realizes the lexicographic tie-break on bit vectors.  Requires all
    component values <= 0 (non-negative costs).
    """
    flat = [value for vec in v for value in vec]
    if any(value > 0 for value in flat):
        raise ValueError("label-setting requires non-positive component values")
    target = instance.terminals[0]
    empty = tuple([0] * instance.total_components)
    start = (0, empty, instance.source)
    heap = [start]
    settled: set[int] = set()
    by_tail: dict[int, list[int]] = {}
    for pos, e in enumerate(instance.edges):
        by_tail.setdefault(e.tail, []).append(pos)
    while heap:
        cost, bits, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == target:
            return bits
        for pos in by_tail.get(node, ()):  # input order
            e = instance.edges[pos]
            if e.head in settled:
                continue
            idx = instance.component_index(pos)
            if bits[idx]:
                continue
            extended = list(bits)
            extended[idx] = 1
            heapq.heappush(heap, (cost - flat[idx], tuple(extended), e.head))
    raise ValueError("no path from source to target")


def solve_cmap_optimal(instance: CmapInstance, v: CmapType) -> CmapOutput:
    """Welfare-argmax over the allowable outputs; ties lexicographically smallest.

    Explicit instances and graphs of at most 12 edges are solved by
    enumeration; larger path instances fall back to exact label-setting.
    """
    instance.check_type(v)
    if isinstance(instance, GraphCmap) and len(instance.edges) > ENUM_EDGE_LIMIT:
        if instance.structure == PATH:
            return _dijkstra_path(instance, v)
        raise BudgetExceededError(
            f"multicast instances beyond {ENUM_EDGE_LIMIT} edges are out of desk scale"
        )
    best = None
    best_key = None
    for output in instance.outputs():
        key = (-cmap_welfare(instance, v, output), output)
        if best_key is None or key < best_key:
            best, best_key = output, key
    assert best is not None
    return best


def _first_path_fixed_order(instance: GraphCmap) -> tuple[int, ...]:
    """First simple source-to-target path found by DFS in edge input order."""
    target = instance.terminals[0]

    def dfs(node, visited, taken):
        if node == target:
            return taken
        for pos, e in enumerate(instance.edges):
            if e.tail == node and e.head not in visited:
                found = dfs(e.head, visited | {e.head}, taken + [pos])
                if found is not None:
                    return found
        return None

    path = dfs(instance.source, {instance.source}, [])
    if path is None:
        raise ValueError("no path from source to target")
    return tuple(path)


def _hop_shortest_path(instance: GraphCmap, target: int) -> tuple[int, ...]:
    """Fewest-hops path by BFS, deterministic via edge input order; cost-blind."""
    parent: dict[int, int] = {}
    reached = {instance.source}
    frontier = [instance.source]
    while frontier:
        nxt = []
        for node in frontier:
            for pos, e in enumerate(instance.edges):
                if e.tail == node and e.head not in reached:
                    reached.add(e.head)
                    parent[e.head] = pos
                    nxt.append(e.head)
        frontier = nxt
    if target not in reached and target != instance.source:
        raise ValueError(f"terminal {target} unreachable")
    path = []
    node = target
    while node != instance.source:
        pos = parent[node]
        path.append(pos)
        node = instance.edges[pos].tail
    return tuple(reversed(path))


def solve_cmap_heuristic(instance: CmapInstance, v: CmapType) -> CmapOutput:
    """A deterministic, deliberately cost-blind suboptimal rule.

    Path instances take the first source-to-target path in fixed edge order.
    Multicast instances take the union of fewest-hops paths to each terminal,
    pruned back to a tree (first incoming edge per node, in edge order).
    Because the rule never reads the type, escalating off-optimum costs can
    make its output arbitrarily bad while staying allowable.
    """
    if not isinstance(instance, GraphCmap):
        raise ValueError("the heuristic is defined for graph-derived instances only")
    instance.check_type(v)
    if instance.structure == PATH:
        return instance.output_from_edges(_first_path_fixed_order(instance))

    union: set[int] = set()
    for t in instance.terminals:
        if t != instance.source:
            union.update(_hop_shortest_path(instance, t))
    # prune the union to an arborescence: first incoming edge per node
    kept: list[int] = []
    reached = {instance.source}
    progress = True
    while progress:
        progress = False
        for pos in sorted(union):
            e = instance.edges[pos]
            if e.tail in reached and e.head not in reached:
                kept.append(pos)
                reached.add(e.head)
                progress = True
    return instance.output_from_edges(kept)


def optimal_cmap_algorithm() -> CmapAlgorithm:
    return CmapAlgorithm("optimal", "exact", solve_cmap_optimal)


def heuristic_cmap_algorithm() -> CmapAlgorithm:
    return CmapAlgorithm("heuristic", "heuristic", solve_cmap_heuristic)


def make_cmap_algorithm(name: str) -> CmapAlgorithm:
    if name == "optimal":
        return optimal_cmap_algorithm()
    if name == "heuristic":
        return heuristic_cmap_algorithm()
    raise ValueError(f"unknown cost-minimization algorithm {name!r}")


def forcing_type(v: CmapType, output: CmapOutput, alpha: Money) -> CmapType:
    """Pin the components selected by ``output``; price everything else at -alpha."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    flat = [value for vec in v for value in vec]
    if len(flat) != len(output):
        raise ValueError("output length does not match the type's component count")
    forced = []
    at = 0
    for vec in v:
        forced.append(tuple(
            value if output[at + j] else -alpha for j, value in enumerate(vec)
        ))
        at += len(vec)
    return tuple(forced)


def degeneracy_ratio(instance: CmapInstance, alg: CmapAlgorithm, v: CmapType) -> Fraction:
    """Normalized optimality gap (g_opt - g_alg) / (|g_opt| + 1), exact and >= 0.

    The +1 regularizer is one micro-unit, keeping the ratio finite at zero
    optimum; the numerator is oriented so a worse algorithm scores higher.
    """
    g_opt = cmap_welfare(instance, v, solve_cmap_optimal(instance, v))
    g_alg = cmap_welfare(instance, v, alg(instance, v))
    return Fraction(g_opt - g_alg, abs(g_opt) + 1)


def escalate_degeneracy(
    instance: CmapInstance,
    alg: CmapAlgorithm,
    seed: CmapType,
    alphas: Sequence[Money],
) -> tuple[Fraction, ...]:
    """Drive the normalized gap upward by pricing off-optimum components at -alpha.

    Starting from a seed type on which ``alg`` is suboptimal, every component
    outside the seed's optimal output is set to -alpha for each alpha in the
    schedule, and the degeneracy ratio of the resulting type is recorded.

    Raises:
        ValueError: if the algorithm is already optimal on the seed.
    """
    instance.check_type(seed)
    optimal_output = solve_cmap_optimal(instance, seed)
    g_opt = cmap_welfare(instance, seed, optimal_output)
    g_alg = cmap_welfare(instance, seed, alg(instance, seed))
    if g_alg == g_opt:
        raise ValueError(
            f"algorithm {alg.name!r} is already optimal on the seed type; nothing to escalate"
        )
    ratios = []
    for alpha in alphas:
        escalated = forcing_type(seed, optimal_output, alpha)
        ratios.append(degeneracy_ratio(instance, alg, escalated))
    return tuple(ratios)
