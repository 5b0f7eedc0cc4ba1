"""Deterministic s-t max-flow / min-cut on sparse networks.

Dinic's algorithm over paired residual arcs.  The phase structure bounds
the number of augmentations independently of capacity values, so real
(non-integer) capacities terminate; every augmentation zeroes its
bottleneck arc exactly in floating point.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class FlowNetwork:
    """Directed network with paired arcs: arc ``2i`` and its reverse ``2i ^ 1``."""

    def __init__(self, num_nodes: int, source: int, sink: int):
        if not (0 <= source < num_nodes and 0 <= sink < num_nodes and source != sink):
            raise ValueError("source and sink must be distinct nodes in range")
        self.num_nodes = num_nodes
        self.source = source
        self.sink = sink
        self.heads: list[int] = []       # arc index -> head node
        self.caps: list[float] = []      # residual capacities
        self.adj: list[list[int]] = [[] for _ in range(num_nodes)]

    def add_edge(self, u: int, v: int, cap: float, reverse_cap: float = 0.0) -> None:
        if cap < 0.0 or reverse_cap < 0.0:
            raise ValueError("capacities must be nonnegative")
        self.adj[u].append(len(self.heads))
        self.heads.append(v)
        self.caps.append(float(cap))
        self.adj[v].append(len(self.heads))
        self.heads.append(u)
        self.caps.append(float(reverse_cap))

    @property
    def num_arcs(self) -> int:
        return len(self.heads)


@dataclass(frozen=True, eq=False)
class MaxFlowResult:
    flow_value: float
    source_side: np.ndarray  # (num_nodes,) bool; True = Source side of the min cut


def max_flow(network: FlowNetwork) -> MaxFlowResult:
    """Compute the maximum s-t flow and a minimum cut labeling.

    The returned labeling puts a node on the Sink side iff it can still
    reach the sink in the residual network; ties and disconnected nodes
    therefore land on the Source side.  Deterministic for a fixed arc
    insertion order.
    """
    heads = network.heads
    caps = list(network.caps)
    adj = network.adj
    s, t, n = network.source, network.sink, network.num_nodes

    flow = 0.0
    level = [0] * n
    it = [0] * n
    while True:
        # BFS: level graph over positive residual arcs
        for i in range(n):
            level[i] = -1
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for a in adj[u]:
                v = heads[a]
                if caps[a] > 0.0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        if level[t] < 0:
            break
        for i in range(n):
            it[i] = 0
        # DFS blocking flow with arc pointers
        while True:
            path: list[int] = []
            u = s
            while u != t:
                advanced = False
                while it[u] < len(adj[u]):
                    a = adj[u][it[u]]
                    v = heads[a]
                    if caps[a] > 0.0 and level[v] == level[u] + 1:
                        path.append(a)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    level[u] = -1  # dead end; prune
                    if not path:
                        u = None  # type: ignore[assignment]
                        break
                    a = path.pop()
                    u = heads[a ^ 1]
                    it[u] += 1
            if u is None:
                break
            bottleneck = min(caps[a] for a in path)
            for a in path:
                caps[a] -= bottleneck
                caps[a ^ 1] += bottleneck
            flow += bottleneck

    # Sink side: nodes that can still reach t (walk residual arcs backwards)
    reaches_t = np.zeros(n, dtype=bool)
    reaches_t[t] = True
    queue = deque([t])
    while queue:
        v = queue.popleft()
        for a in adj[v]:
            u = heads[a]
            # the paired arc a^1 runs u -> v; positive residual lets u reach t
            if caps[a ^ 1] > 0.0 and not reaches_t[u]:
                reaches_t[u] = True
                queue.append(u)
    return MaxFlowResult(flow_value=flow, source_side=~reaches_t)
