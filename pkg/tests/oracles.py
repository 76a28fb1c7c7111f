"""Independent reference implementations used as oracles by the test suite.

Everything here is deliberately written in a different style from the
production code (plain recursion, byte scanning, brute-force fixpoints) so a
bug would have to appear twice to go unnoticed.
"""

from __future__ import annotations

from itertools import combinations

from socbuild.graph import ResolvedGraph
from socbuild.model import Vlnv, new_ip


def ref_flatten(edges: dict[str, list[str]], root: str) -> list[str]:
    """Recursive post-order reference: emit each node at first completion."""
    out: list[str] = []
    done: set[str] = set()

    def walk(node: str) -> None:
        if node in done:
            return
        done.add(node)
        for dep in edges.get(node, []):
            walk(dep)
        out.append(node)

    walk(root)
    return out


def reachable_from(root: str, edges: dict[str, list[str]]) -> set[str]:
    seen = {root}
    frontier = [root]
    while frontier:
        node = frontier.pop()
        for dep in edges.get(node, []):
            if dep not in seen:
                seen.add(dep)
                frontier.append(dep)
    return seen


def is_topological(order: list[str], nodes: set[str], edges: dict[str, list[str]]) -> bool:
    """True iff ``order`` is a permutation of ``nodes`` with every dependency
    placed before its dependent (the definition of membership in the set of
    all topological orders)."""
    if len(order) != len(nodes) or set(order) != nodes:
        return False
    pos = {n: i for i, n in enumerate(order)}
    for node in nodes:
        for dep in edges.get(node, []):
            if dep in nodes and pos[dep] >= pos[node]:
                return False
    return True


def all_topo_orders(nodes: list[str], edges: dict[str, list[str]]) -> list[list[str]]:
    """Brute-force enumeration of every topological order (small graphs only)."""
    indeg = {n: 0 for n in nodes}
    dependents: dict[str, list[str]] = {n: [] for n in nodes}
    for node in nodes:
        for dep in edges.get(node, []):
            if dep in indeg:
                indeg[node] += 1
                dependents[dep].append(node)
    orders: list[list[str]] = []
    current: list[str] = []

    def extend(available: list[str]) -> None:
        if len(current) == len(nodes):
            orders.append(list(current))
            return
        for pick in list(available):
            current.append(pick)
            next_avail = [a for a in available if a != pick]
            for dep in dependents[pick]:
                indeg[dep] -= 1
                if indeg[dep] == 0:
                    next_avail.append(dep)
            extend(next_avail)
            for dep in dependents[pick]:
                indeg[dep] += 1
            current.pop()

    extend([n for n in nodes if indeg[n] == 0])
    return orders


def enumerate_rooted_dags(max_nodes: int):
    """Yield (names, edges) for every DAG on <= max_nodes nodes where all
    nodes are reachable from the first one.

    Nodes are n0..nk with edges only from lower to higher index, which
    enumerates every DAG shape up to relabeling.
    """
    for n in range(1, max_nodes + 1):
        names = [f"n{i}" for i in range(n)]
        possible = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for r in range(len(possible) + 1):
            for chosen in combinations(possible, r):
                edges: dict[str, list[str]] = {name: [] for name in names}
                for i, j in chosen:
                    edges[names[i]].append(names[j])
                if reachable_from(names[0], edges) == set(names):
                    yield names, edges


def graph_from_edges(edges: dict[str, list[str]], root: str) -> ResolvedGraph:
    """Build a ResolvedGraph directly from a name-level edge map."""
    ids = {name: Vlnv("v", "l", name, (1, 0, 0)) for name in edges}
    keep = reachable_from(root, edges)
    nodes = {ids[name]: new_ip(ids[name]) for name in edges if name in keep}
    bound = {ids[name]: [ids[d] for d in deps] for name, deps in edges.items() if name in keep}
    return ResolvedGraph(ids[root], nodes, bound)


_WORD_BYTES = frozenset(
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_"
)


def sv2v_reference(data: bytes) -> bytes:
    """Whole-word logic->wire replacement by explicit byte scanning."""
    token = b"logic"
    out = bytearray()
    i = 0
    while i < len(data):
        if data[i:i + len(token)] == token:
            before_ok = i == 0 or data[i - 1] not in _WORD_BYTES
            end = i + len(token)
            after_ok = end >= len(data) or data[end] not in _WORD_BYTES
            if before_ok and after_ok:
                out += b"wire"
                i = end
                continue
        out.append(data[i])
        i += 1
    return bytes(out)


def affected_targets(targets, changed_paths: set[str]) -> set[str]:
    """Brute-force fixpoint: which targets must rerun after these files changed.

    A target is affected if it reads a changed path directly, or reads the
    output of an affected target.
    """
    affected: set[str] = set()
    changed = set(changed_paths)
    grew = True
    while grew:
        grew = False
        for t in targets:
            if t.name in affected:
                continue
            if any(p in changed for p in t.inputs):
                affected.add(t.name)
                changed.update(t.outputs)
                grew = True
    return affected
