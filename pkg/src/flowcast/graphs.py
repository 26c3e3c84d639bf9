"""Undirected neighbor graphs over sequential site IDs.

Sites are numbered 1..n_sites.  Edges are unordered pairs, so the graph is
symmetric by construction; self-loops and duplicates are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError


@dataclass(frozen=True)
class SiteGraph:
    """Neighbor graph over sites 1..n_sites with a set of unordered edges."""

    n_sites: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_sites < 0:
            raise InvalidInputError(f"n_sites must be non-negative, got {self.n_sites}")
        normalized = set()
        for e in self.edges:
            i, j = e
            if i == j:
                raise InvalidInputError(f"self-loop at site {i}")
            if not (1 <= i <= self.n_sites and 1 <= j <= self.n_sites):
                raise InvalidInputError(f"edge {e} out of range 1..{self.n_sites}")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    def neighbors(self, i: int) -> set[int]:
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out

    def degree_array(self) -> np.ndarray:
        deg = np.zeros(self.n_sites, dtype=int)
        for a, b in self.edges:
            deg[a - 1] += 1
            deg[b - 1] += 1
        return deg

    def connected_components(self) -> list[list[int]]:
        """Components as sorted lists of 1-based site IDs."""
        adj: dict[int, list[int]] = {i: [] for i in range(1, self.n_sites + 1)}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        seen: set[int] = set()
        comps = []
        for start in range(1, self.n_sites + 1):
            if start in seen:
                continue
            stack = [start]
            comp = []
            seen.add(start)
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in adj[v]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return self.n_sites <= 1 or len(self.connected_components()) == 1


def read_graph(path: str | Path) -> SiteGraph:
    """Read a plain-text edge list.

    First non-comment line is ``n <n_sites>``; every following line is an
    ``i j`` pair (1-based, whitespace-separated).  ``#`` starts a comment.
    """
    n_sites = None
    edges = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if n_sites is None:
                if len(parts) != 2 or parts[0] != "n":
                    raise ParseError(
                        f"{path}:{lineno}: expected header 'n <n_sites>', got {raw!r}",
                        line_number=lineno,
                    )
                try:
                    n_sites = int(parts[1])
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: bad site count {parts[1]!r}", line_number=lineno
                    ) from None
                continue
            if len(parts) != 2:
                raise ParseError(
                    f"{path}:{lineno}: expected 'i j' pair, got {raw!r}", line_number=lineno
                )
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(
                    f"{path}:{lineno}: non-integer edge {raw!r}", line_number=lineno
                ) from None
            edges.add((i, j))
    if n_sites is None:
        raise ParseError(f"{path}: empty graph file", line_number=None)
    return SiteGraph(n_sites=n_sites, edges=frozenset(edges))


def write_graph(graph: SiteGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n {graph.n_sites}\n")
        for a, b in sorted(graph.edges):
            fh.write(f"{a} {b}\n")


def write_presence_grid(graph: SiteGraph, path: str | Path) -> None:
    """Export the neighbor structure as an n x n CSV grid of 0/1 for inspection."""
    n = graph.n_sites
    grid = np.zeros((n, n), dtype=int)
    for a, b in graph.edges:
        grid[a - 1, b - 1] = 1
        grid[b - 1, a - 1] = 1
    with open(path, "w", encoding="utf-8") as fh:
        for row in grid:
            fh.write(",".join(str(v) for v in row) + "\n")
