import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import exhaustive_reduction, scenario_set

from gridplan.meteorology import GenerationProfile, ValidationError
from gridplan.scenarios import (
    Scenario,
    ScenarioSet,
    build_daily_scenarios,
    reduce_scenarios,
    reduction_error,
    scenario_distance,
)


def one_slot_set(values, probs=None):
    """Scenarios with one location, one slot, solar = value and wind = 0."""
    n = len(values)
    return scenario_set({"A": np.array(values, float)[:, None]}, {"A": np.zeros((n, 1))}, probs)


def naive_forward_selection(sset, count):
    """Textbook greedy: add the scenario that lowers the objective most."""
    ids = sorted(sset.ids)
    kept: list[int] = []
    for _ in range(count):
        best = None
        for cand in ids:
            if cand in kept:
                continue
            err = reduction_error(sset, kept + [cand])
            if best is None or err < best[0] - 1e-15:
                best = (err, cand)
        kept.append(best[1])
    kept.sort()
    X = {s.id: s.vector() for s in sset.scenarios}
    probs = {k: sset.probabilities[sset.ids.index(k)] for k in kept}
    for sid, p in zip(sset.ids, sset.probabilities):
        if sid in kept:
            continue
        d = [np.linalg.norm(X[sid] - X[k]) for k in kept]
        probs[kept[int(np.argmin(d))]] += p
    return kept, [probs[k] for k in kept]


def test_build_daily_examples():
    one = build_daily_scenarios({"A": GenerationProfile("A", "solar", np.full(24, 0.5))},
                                {"A": GenerationProfile("A", "wind", np.full(24, 0.2))})
    assert len(one) == 1 and one.probabilities.tolist() == [1.0]
    rng = np.random.default_rng(0)
    wind = {l: GenerationProfile(l, "wind", rng.random(48)) for l in ("A", "B")}
    two = build_daily_scenarios({"A": None, "B": None}, wind)
    assert two.ids == [1, 2] and np.allclose(two.probabilities, 0.5)
    assert np.array_equal(two.by_id(2).wind["B"], wind["B"].per_unit_output[24:])
    assert np.all(two.by_id(1).solar["A"] == 0.0)


def test_build_daily_year():
    w = GenerationProfile("A", "wind", np.random.default_rng(1).random(365 * 24))
    sset = build_daily_scenarios({}, {"A": w})
    assert len(sset) == 365 and np.allclose(sset.probabilities, 1 / 365)


def test_build_daily_misaligned():
    with pytest.raises(ValidationError):
        build_daily_scenarios({}, {"A": GenerationProfile("A", "wind", np.zeros(48)),
                                   "B": GenerationProfile("B", "wind", np.zeros(24))})
    with pytest.raises(ValidationError):
        build_daily_scenarios({}, {"A": GenerationProfile("A", "wind", np.zeros(30))})


def test_distance_examples():
    z = Scenario(1, {"A": np.zeros(24)}, {"A": np.zeros(24)})
    h = Scenario(2, {"A": np.full(24, 0.5)}, {"A": np.full(24, 0.5)})
    bump = np.zeros(24)
    bump[3] = 1.0
    u = Scenario(3, {"A": np.zeros(24)}, {"A": bump})
    assert scenario_distance(z, z) == 0.0
    assert scenario_distance(z, u) == 1.0
    assert scenario_distance(z, h) == pytest.approx(0.5 * math.sqrt(48))
    other = Scenario(4, {"B": np.zeros(24)}, {"B": np.zeros(24)})
    with pytest.raises(ValidationError):
        scenario_distance(z, other)


def test_reduce_examples():
    rng = np.random.default_rng(3)
    sset = scenario_set({"A": rng.random((4, 24))}, {"A": rng.random((4, 24))}, [0.1, 0.2, 0.3, 0.4])
    same = reduce_scenarios(sset, 4)
    assert same.ids == sset.ids and np.array_equal(same.probabilities, sset.probabilities)
    dup = scenario_set({"A": np.full((2, 24), 0.3)}, {"A": np.full((2, 24), 0.6)})
    red = reduce_scenarios(dup, 1)
    assert red.ids == [1] and red.probabilities.tolist() == [1.0]


def test_reduce_five_to_two_matches_exhaustive():
    rng = np.random.default_rng(5)
    sset = scenario_set({"A": rng.random((5, 24))}, {"A": rng.random((5, 24))})
    red = reduce_scenarios(sset, 2)
    assert reduction_error(sset, red.ids) == pytest.approx(exhaustive_reduction(sset, 2, reduction_error))


def test_reduce_matches_naive_greedy():
    rng = np.random.default_rng(9)
    for n in (3, 6, 12):
        for _ in range(5):
            probs = rng.dirichlet(np.ones(n))
            probs[-1] = 1 - probs[:-1].sum()
            sset = scenario_set({"A": rng.random((n, 6)), "B": rng.random((n, 6))},
                                {"A": rng.random((n, 6)), "B": rng.random((n, 6))}, probs)
            for k in range(1, n + 1):
                red = reduce_scenarios(sset, k)
                kept, p = naive_forward_selection(sset, k)
                assert red.ids == kept
                assert np.allclose(red.probabilities, p, atol=1e-15)


def test_ties_break_to_lowest_id():
    # scenarios 2 and 4 coincide, so both are equally good first picks
    sset = one_slot_set([0.0, 0.5, 1.0, 0.5], [0.25, 0.25, 0.25, 0.25])
    red = reduce_scenarios(sset, 1)
    assert red.ids == [2]  # ids 2 and 4 tie; the lower wins
    sset = one_slot_set([0.2, 0.2, 0.2])
    assert reduce_scenarios(sset, 2).ids == [1, 2]
    # scenario 3 at (0.5, 1) is equidistant from kept 1 at (0, 0) and 2 at (1, 0)
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
    sset = scenario_set({"A": pts}, {"A": np.zeros((3, 2))}, [0.45, 0.45, 0.1])
    red = reduce_scenarios(sset, 2)
    assert red.ids == [1, 2] and red.probabilities.tolist() == pytest.approx([0.55, 0.45])


def test_reduce_preserves_input_ids_and_orders_them():
    rng = np.random.default_rng(2)
    sset = scenario_set({"A": rng.random((4, 24))}, {"A": rng.random((4, 24))}, ids=[40, 10, 30, 20])
    red = reduce_scenarios(sset, 2)
    assert red.ids == sorted(red.ids) and set(red.ids) <= {10, 20, 30, 40}


@pytest.mark.parametrize("count", [0, 5, 2.0])
def test_reduce_rejects_bad_count(count):
    with pytest.raises(ValidationError):
        reduce_scenarios(one_slot_set([0.0, 1.0, 0.5, 0.2]), count)


def test_reduction_error_examples():
    # values {0, 1, 2} halved to stay per-unit, so the error halves as well
    sset = one_slot_set([0.0, 0.5, 1.0])
    assert reduction_error(sset, [1, 3]) == pytest.approx(0.5 / 3)
    assert reduction_error(sset, [1, 2, 3]) == 0.0
    dup = one_slot_set([0.3, 0.3])
    assert reduction_error(dup, [1]) == 0.0
    with pytest.raises(ValidationError):
        reduction_error(sset, [7])
    with pytest.raises(ValidationError):
        reduction_error(sset, [])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_reduce_invariants(n, seed):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(n))
    probs[-1] = 1 - probs[:-1].sum()
    sset = scenario_set({"A": rng.random((n, 4))}, {"A": rng.random((n, 4))}, probs)
    prev = math.inf
    for k in range(1, n + 1):
        red = reduce_scenarios(sset, k)
        assert len(red) == k
        assert abs(math.fsum(red.probabilities) - 1.0) <= 1e-12
        orig = dict(zip(sset.ids, sset.probabilities))
        assert all(p >= orig[i] for i, p in zip(red.ids, red.probabilities))
        err = reduction_error(sset, red.ids)
        assert err <= prev + 1e-12
        prev = err
        assert reduce_scenarios(sset, k).ids == red.ids  # deterministic


def test_set_invariants():
    a = Scenario(1, {"A": np.zeros(2)}, {"A": np.zeros(2)})
    b = Scenario(1, {"A": np.ones(2)}, {"A": np.ones(2)})
    with pytest.raises(ValidationError):
        ScenarioSet((a, b), [0.5, 0.5])  # duplicate id
    with pytest.raises(ValidationError):
        ScenarioSet((a,), [0.9])
    with pytest.raises(ValidationError):
        ScenarioSet((a,), [-1.0])
    with pytest.raises(ValidationError):
        Scenario(2, {"A": np.full(2, 1.5)}, {"A": np.zeros(2)})
    with pytest.raises(ValidationError):
        Scenario(2, {"A": np.zeros(2)}, {"B": np.zeros(2)})


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    sset = scenario_set({"A": rng.random((3, 24)), "B": rng.random((3, 24))},
                        {"A": rng.random((3, 24)), "B": rng.random((3, 24))}, [0.2, 0.3, 0.5], ids=[4, 8, 9])
    path = tmp_path / "s.json"
    sset.save(path)
    back = ScenarioSet.load(path)
    assert back.ids == sset.ids and np.array_equal(back.probabilities, sset.probabilities)
    assert np.array_equal(back.matrix(), sset.matrix())
    doc = sset.to_json()
    assert set(doc) == {"locations", "scenarios"} and set(doc["scenarios"][0]) == {"id", "pi", "solar", "wind"}


def test_json_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"locations": ["A"], "scenarios": [{"id": 1}]}')
    with pytest.raises(ValidationError):
        ScenarioSet.load(path)
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        ScenarioSet.load(path)
