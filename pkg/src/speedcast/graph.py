"""Directed road-network topology and K-hop neighborhood masks.

A road network is a set of links (directed road segments); adjacency entry
``A[i, j] = 1`` means link ``i`` feeds link ``j`` along the driving
direction. Hop masks gate which links' speeds may enter each link's graph
convolution: in ``cumulative`` mode (the default) row ``i`` covers every
link within ``K`` directed hops of ``i`` plus ``i`` itself; in ``exact``
mode it covers only links reachable by walks of exactly ``K`` steps plus
``i`` itself (the clipped K-th matrix power with the identity added).
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

HOP_MODES = ("cumulative", "exact")


@dataclass(eq=False)
class RoadGraph:
    """Immutable link-level road network.

    ``link_ids`` fixes the canonical link ordering used by every speed
    vector downstream; ``adjacency`` is the binary feeds-into matrix with a
    zero diagonal.
    """

    link_ids: tuple[str, ...]
    adjacency: np.ndarray

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.int8)
        self._index = {lid: k for k, lid in enumerate(self.link_ids)}

    @property
    def link_count(self) -> int:
        return len(self.link_ids)

    def index(self, link_id: str) -> int:
        try:
            return self._index[link_id]
        except KeyError:
            raise KeyError(f"unknown link id {link_id!r}") from None

    def successors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def predecessors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[:, i])


@dataclass(eq=False)
class HopMask:
    """Binary K-hop neighborhood mask with an all-ones diagonal."""

    order: int
    mode: str
    mask: np.ndarray

    def neighbors(self, i: int) -> np.ndarray:
        """Column indices whose speeds may feed link ``i`` (includes ``i``)."""
        return np.flatnonzero(self.mask[i])


def build_graph(links: Sequence[str], edges: Iterable[tuple[str, str]]) -> RoadGraph:
    """Build a RoadGraph from link ids and directed (from, to) pairs.

    Isolated links are fine; self-edges and duplicate ids are not.
    """
    links = list(links)
    if len(set(links)) != len(links):
        dupes = sorted({l for l in links if links.count(l) > 1})
        raise ValueError(f"duplicate link ids: {dupes}")
    index = {lid: k for k, lid in enumerate(links)}
    n = len(links)
    adjacency = np.zeros((n, n), dtype=np.int8)
    for src, dst in edges:
        if src not in index:
            raise KeyError(f"unknown link id {src!r} in edge ({src!r}, {dst!r})")
        if dst not in index:
            raise KeyError(f"unknown link id {dst!r} in edge ({src!r}, {dst!r})")
        if src == dst:
            raise ValueError(f"self-edge on link {src!r} is not allowed")
        adjacency[index[src], index[dst]] = 1
    return RoadGraph(link_ids=tuple(links), adjacency=adjacency)


def ring_graph(n: int, prefix: str = "L") -> RoadGraph:
    """A directed ring of ``n`` links; ``n = 1`` degenerates to no edges."""
    if n < 1:
        raise ValueError(f"ring size must be >= 1, got {n}")
    width = max(3, len(str(n - 1)))
    links = [f"{prefix}{k:0{width}d}" for k in range(n)]
    edges = [(links[k], links[(k + 1) % n]) for k in range(n)] if n > 1 else []
    return build_graph(links, edges)


def hop_distance(g: RoadGraph, i: int, j: int) -> int | None:
    """Length of the shortest directed walk from link i to link j.

    Returns ``None`` when j is unreachable from i; ``d(i, i) = 0``.
    """
    n = g.link_count
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"link index out of range: ({i}, {j}) for {n} links")
    if i == j:
        return 0
    seen = {i}
    queue = deque([(i, 0)])
    while queue:
        node, dist = queue.popleft()
        for nxt in g.successors(node):
            if nxt == j:
                return dist + 1
            if nxt not in seen:
                seen.add(nxt)
                queue.append((int(nxt), dist + 1))
    return None


def hop_mask(g: RoadGraph, k: int, mode: str = "cumulative") -> HopMask:
    """Binary mask of order ``k``.

    cumulative: entry (i, j) is 1 iff d(i, j) <= k or i == j.
    exact: the clipped k-th adjacency power plus the identity, i.e. links
    reachable by a walk of exactly k steps plus self.

    Powers are taken in the boolean semiring (clipping after every
    multiply), so large ``k`` cannot overflow.
    """
    if k < 0:
        raise ValueError(f"hop order must be >= 0, got {k}")
    if mode not in HOP_MODES:
        raise ValueError(f"hop mode must be one of {HOP_MODES}, got {mode!r}")
    n = g.link_count
    a = g.adjacency.astype(bool)
    if mode == "cumulative":
        base = a | np.eye(n, dtype=bool)
    else:
        base = a
    power = np.eye(n, dtype=bool)
    for _ in range(k):
        power = (power.astype(np.int64) @ base.astype(np.int64)) > 0
    mask = power | np.eye(n, dtype=bool)
    return HopMask(order=k, mode=mode, mask=mask.astype(np.int8))


def load_links_csv(path) -> list[str]:
    """Read link ids from a CSV with the exact header ``link_id``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["link_id"]:
            raise ValueError(f"{path}: expected header 'link_id', got {header}")
        return [row[0] for row in reader if row]


def load_edges_csv(path) -> list[tuple[str, str]]:
    """Read directed edges from a CSV with header ``from_link,to_link``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["from_link", "to_link"]:
            raise ValueError(f"{path}: expected header 'from_link,to_link', got {header}")
        return [(row[0], row[1]) for row in reader if row]
