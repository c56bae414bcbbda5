import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_ordering
from reflprior.annotations import ComparisonGraph, Judgment, Point, Relation
from reflprior.ordering import (
    OrderingProblem,
    default_labels,
    energy_of,
    ordering_whdr,
    problem_from_scores,
    solve_continuous,
    solve_discrete,
)
from reflprior.scorer import OracleScorer


def edge(i, j, w):
    return [i, j, *w]


def test_energy_equal_edge():
    p = OrderingProblem(2, np.array([edge(0, 1, (1, 0, 0))]))
    assert energy_of(p, [0.3, 0.5]) == pytest.approx(0.2)


def test_energy_less_satisfied():
    p = OrderingProblem(2, np.array([edge(0, 1, (0, 1, 0))]))
    assert energy_of(p, [0.2, 0.8]) == 0.0


def test_energy_greater_violated():
    p = OrderingProblem(2, np.array([edge(0, 1, (0, 0, 1))]))
    assert energy_of(p, [0.2, 0.8]) == pytest.approx(0.6)


def test_margin_makes_ties_cost():
    p = OrderingProblem(2, np.array([edge(0, 1, (0, 1, 0))]), margin=0.1)
    assert energy_of(p, [0.5, 0.5]) == pytest.approx(0.1)
    assert energy_of(p, [0.2, 0.8]) == 0.0


def test_invalid_problems():
    with pytest.raises(ValueError):
        OrderingProblem(2, np.array([edge(0, 1, (np.nan, 0, 0))]))
    with pytest.raises(ValueError):
        OrderingProblem(2, np.array([edge(0, 1, (-1, 0, 0))]))
    with pytest.raises(ValueError):
        OrderingProblem(2, np.array([edge(0, 2, (1, 0, 0))]))
    with pytest.raises(ValueError):
        OrderingProblem(2, np.zeros((0, 5)), labels=[0.5, 0.2])


def test_two_node_less():
    p = OrderingProblem(2, np.array([edge(0, 1, (0, 1, 0))]), labels=[0.0, 1.0], margin=1.0)
    g = solve_discrete(p)
    assert list(g.values) == [0.0, 1.0] and g.energy == 0.0


def test_two_node_less_without_margin_ties_low():
    p = OrderingProblem(2, np.array([edge(0, 1, (0, 1, 0))]), labels=[0.0, 1.0])
    g = solve_discrete(p)
    assert list(g.values) == [0.0, 0.0] and g.energy == 0.0


def test_greater_cycle():
    # brute force over the 8 assignments: every labelling satisfies all three
    # hinges at margin 0 (constant labels), and at a one-step margin the best
    # labelling pays 3
    edges = np.array([edge(0, 1, (0, 0, 1)), edge(1, 2, (0, 0, 1)), edge(2, 0, (0, 0, 1))])
    for m, expected in ((0.0, 0.0), (1.0, 3.0)):
        p = OrderingProblem(3, edges, labels=[0.0, 1.0], margin=m)
        assert solve_discrete(p).energy == expected
        assert brute_force_ordering(3, [(0, 1, 0, 0, 1), (1, 2, 0, 0, 1), (2, 0, 0, 0, 1)], [0, 1], int(m))[0] == expected


def test_ties_go_low():
    p = OrderingProblem(3, np.zeros((0, 5)), labels=[0.1, 0.5, 0.9])
    g = solve_discrete(p)
    assert list(g.label_index) == [0, 0, 0]


def random_integer_problem(rng):
    n = int(rng.integers(1, 7))
    nl = int(rng.integers(2, 6))
    labels = np.sort(rng.choice(16, nl, replace=False))
    m = int(rng.choice([0, 0, 1, 2, 3]))
    edges = []
    for _ in range(int(rng.integers(0, 2 * n + 1))):
        a, b = rng.integers(0, n, 2)
        edges.append((int(a), int(b), *[int(x) for x in rng.integers(0, 4, 3)]))
    scaled = np.array([(a, b, we / 4, wl / 4, wg / 4) for a, b, we, wl, wg in edges]).reshape(-1, 5)
    return OrderingProblem(n, scaled, labels / 15, m / 15), n, edges, labels, m


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_discrete_matches_brute_force(seed):
    p, n, edges, labels, m = random_integer_problem(np.random.default_rng(seed))
    g = solve_discrete(p)
    best, assign, total = brute_force_ordering(n, edges, labels, m)
    # energy of the solver's labelling in the same integer units
    vals = labels[g.label_index]
    e = sum(we * abs(vals[a] - vals[b]) + wl * max(vals[a] - vals[b] + m, 0) + wg * max(m - vals[a] + vals[b], 0)
            for a, b, we, wl, wg in edges)
    assert e == best
    assert g.energy == pytest.approx(best / 60, abs=1e-9)
    # lowest-label tie break: below every optimal labelling
    assert np.all(assign[total == best] >= g.label_index)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_continuous_matches_fine_grid(seed):
    p, *_ = random_integer_problem(np.random.default_rng(seed))
    grid = OrderingProblem(p.n, p.edges, np.arange(256) / 255, p.margin)
    cont = solve_continuous(p)
    assert cont.energy == pytest.approx(solve_discrete(grid).energy, abs=1e-4)
    assert cont.energy == pytest.approx(energy_of(p, cont.values), abs=1e-9)


def test_continuous_single_node_keeps_init():
    p = OrderingProblem(1, np.zeros((0, 5)))
    g = solve_continuous(p, init=[0.3])
    assert g.values[0] == 0.3 and g.energy == 0.0


def test_subgradient_equal_edge():
    p = OrderingProblem(2, np.array([edge(0, 1, (1, 0, 0))]))
    g = solve_continuous(p, method="subgradient", init=[0.1, 0.9], iters=2000)
    assert g.energy < 1e-4
    assert all(b <= a for a, b in zip(g.trace, g.trace[1:]))


def test_chain_any_increasing_is_free():
    p = OrderingProblem(3, np.array([edge(0, 1, (0, 1, 0)), edge(1, 2, (0, 1, 0))]))
    assert energy_of(p, [0.1, 0.4, 0.7]) == 0.0
    assert solve_continuous(p).energy == 0.0


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_continuous(OrderingProblem(1, np.zeros((0, 5))), method="newton")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5))
def test_energy_shift_invariant(seed, shift):
    p, *_ = random_integer_problem(np.random.default_rng(seed))
    r = np.random.default_rng(seed + 1).random(p.n)
    assert energy_of(p, r + shift) == pytest.approx(energy_of(p, r), abs=1e-12)


def test_oracle_scores_recover_order():
    rng = np.random.default_rng(3)
    labels = default_labels(0.05, 1.0, 20)
    true = rng.choice(labels[::3], size=6)
    img = np.repeat(true.reshape(1, -1, 1), 3, axis=-1)
    pairs = [(a, b) for a in range(6) for b in range(6) if a != b]
    sc = OracleScorer(img).score_pairs(img, pairs)
    prob, nodes = problem_from_scores(sc, labels=labels, margin=float(np.min(np.diff(labels))))
    g = solve_discrete(prob)
    for a, b in pairs:
        assert np.sign(g.values[a] - g.values[b]) == np.sign(true[a] - true[b])


def test_ordering_whdr_delegates():
    pts = [Point(k, 0.5, 0.5) for k in range(2)]
    g = ComparisonGraph("t", pts, [Judgment(0, 1, Relation.LESS, 1.0)])
    p = OrderingProblem(2, np.array([edge(0, 1, (0, 1, 0))]), labels=[0.2, 0.8], margin=0.6)
    assert ordering_whdr(g, solve_discrete(p), [0, 1]) == 0.0
