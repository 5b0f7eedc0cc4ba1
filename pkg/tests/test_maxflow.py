"""Max-flow against exhaustive min-cut enumeration."""
import numpy as np
import pytest

from boxsal.maxflow import FlowNetwork, max_flow


def brute_force_min_cut(num_internal: int, arcs) -> float:
    """Minimum over all 2^n source-side subsets of the crossing capacity.

    Node 0 is the source, node num_internal + 1 the sink.
    """
    best = np.inf
    for bits in range(2 ** num_internal):
        side = {0}
        for i in range(num_internal):
            if bits >> i & 1:
                side.add(i + 1)
        cut = sum(cap for u, v, cap in arcs if u in side and v not in side)
        best = min(best, cut)
    return best


def random_terminal_graph(rng, max_internal=12):
    n = int(rng.integers(1, max_internal + 1))
    net = FlowNetwork(n + 2, source=0, sink=n + 1)
    arcs = []
    for u in range(n + 2):
        for v in range(n + 2):
            if u == v or v == 0 or u == n + 1:
                continue
            if rng.random() < 0.35:
                cap = float(rng.uniform(0, 10))
                net.add_edge(u, v, cap)
                arcs.append((u, v, cap))
    return n, net, arcs


def test_worked_example_flow_five():
    # s->a:3, s->b:2, a->b:1, a->t:2, b->t:3
    net = FlowNetwork(4, source=0, sink=3)
    net.add_edge(0, 1, 3.0)
    net.add_edge(0, 2, 2.0)
    net.add_edge(1, 2, 1.0)
    net.add_edge(1, 3, 2.0)
    net.add_edge(2, 3, 3.0)
    result = max_flow(net)
    assert result.flow_value == pytest.approx(5.0, abs=1e-12)
    # verified against enumeration of all 4 partitions of {a, b}
    assert brute_force_min_cut(2, [(0, 1, 3.), (0, 2, 2.), (1, 2, 1.), (1, 3, 2.), (2, 3, 3.)]) == 5.0


def test_zero_source_capacity_puts_nodes_on_sink_side():
    net = FlowNetwork(4, source=0, sink=3)
    for p in (1, 2):
        net.add_edge(0, p, 0.0)
        net.add_edge(p, 3, 1.0)
    result = max_flow(net)
    assert result.flow_value == 0.0
    assert not result.source_side[1] and not result.source_side[2]


def test_disconnected_node_lands_on_source_side():
    net = FlowNetwork(4, source=0, sink=3)
    net.add_edge(0, 1, 1.0)
    net.add_edge(1, 3, 1.0)
    # node 2 has no arcs at all
    result = max_flow(net)
    assert result.source_side[2]


def test_equal_affinity_tie_goes_to_source_side():
    net = FlowNetwork(3, source=0, sink=2)
    net.add_edge(0, 1, 2.5)
    net.add_edge(1, 2, 2.5)
    result = max_flow(net)
    assert result.flow_value == pytest.approx(2.5)
    assert result.source_side[1]


def test_matches_brute_force_on_random_graphs():
    rng = np.random.default_rng(21)
    for trial in range(200):
        n, net, arcs = random_terminal_graph(rng, max_internal=8)
        flow = max_flow(net).flow_value
        cut = brute_force_min_cut(n, arcs)
        assert flow == pytest.approx(cut, abs=1e-9), f"trial {trial}"


def test_cut_labeling_achieves_flow_value():
    rng = np.random.default_rng(22)
    for _ in range(100):
        n, net, arcs = random_terminal_graph(rng, max_internal=8)
        result = max_flow(net)
        side = {u for u in range(n + 2) if result.source_side[u]}
        cut_value = sum(cap for u, v, cap in arcs if u in side and v not in side)
        assert cut_value == pytest.approx(result.flow_value, abs=1e-9)


def test_deterministic():
    rng = np.random.default_rng(23)
    n, net, arcs = random_terminal_graph(rng)
    a = max_flow(net)
    b = max_flow(net)
    assert a.flow_value == b.flow_value
    np.testing.assert_array_equal(a.source_side, b.source_side)


def test_rejects_negative_capacity():
    net = FlowNetwork(3, source=0, sink=2)
    with pytest.raises(ValueError):
        net.add_edge(0, 1, -1.0)
