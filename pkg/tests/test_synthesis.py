import math
import random

import pytest

from redfam import example_path
from redfam.model import Configuration, config_at, load_model, parse_model
from redfam.synthesis import (
    CostError,
    CostModel,
    InfeasibleError,
    ParetoPoint,
    format_points,
    load_cost,
    min_prob_under_time,
    min_time_under_prob,
    pareto_front,
    parse_cost,
    round_time,
)

from oracles import brute_force_front

# Pareto-optimal VCL combinations with their known round time and failure probability
VCL_FRONT = [
    ("cccscccs", 150, 1.4995e-4),
    ("ccc-ccc-", 132, 1.4997e-4),
    ("ccc-scc-", 131, 1.5994e-4),
    ("c-c-ccc-", 117, 1.5997e-4),
    ("c-c-scc-", 116, 1.6994e-4),
    ("c-c-c-c-", 105, 1.6997e-4),
    ("c-c-s-c-", 104, 1.7994e-4),
    ("--c-c-c-", 95, 1.7997e-4),
    ("--c-c---", 85, 1.8997e-4),
    ("--c-s---", 84, 1.9994e-4),
    ("----cc--", 83, 1.9997e-4),
    ("--c-----", 75, 1.9998e-4),
    ("----c---", 71, 2.0997e-4),
    ("----s---", 70, 2.1994e-4),
    ("--------", 61, 2.1998e-4),
]


@pytest.fixture(scope="module")
def vcl():
    fam = load_model(example_path("vcl.fam"))
    return fam, load_cost(example_path("vcl_cost.csv"), fam)


@pytest.fixture(scope="module")
def vcl_front(vcl):
    fam, cost = vcl
    return [ParetoPoint(Configuration.from_abbrev(fam, ab), t, p) for ab, t, p in VCL_FRONT]


def test_block_order_matches_cost_rows(vcl):
    fam, _ = vcl
    names = [fam.depm.round_body[b].name for b in fam.annotated]
    assert names == ["P", "I", "D", "SignalBuilder", "FuelMass", "Subtract", "VehicleMass", "vCruise"]


def test_vcl_front_times_exact(vcl):
    fam, cost = vcl
    for ab, t, _ in VCL_FRONT:
        assert round_time(Configuration.from_abbrev(fam, ab), cost) == t
    assert round_time(Configuration.from_abbrev(fam, "cccscccs"), cost) == 61 + 10 + 15 + 14 + 9 + 10 + 12 + 10 + 9


def test_voting_everywhere_is_most_expensive(vcl):
    fam, cost = vcl
    vv = round_time(Configuration.from_abbrev(fam, "vvvvvvvv"), cost)
    assert vv == 61 + 15 + 23 + 22 + 15 + 15 + 18 + 15 + 15


def test_vcl_front_is_its_own_front(vcl_front):
    front = pareto_front(vcl_front)
    assert [p.time for p in front] == [t for _, t, _ in VCL_FRONT]
    assert pareto_front(vcl_front[:1]) == vcl_front[:1]


def test_last_three_rows_mutually_nondominated(vcl_front):
    tail = vcl_front[-3:]
    assert sorted(pareto_front(tail), key=lambda p: p.time) == sorted(tail, key=lambda p: p.time)


def test_min_prob_under_time(vcl_front):
    best = min_prob_under_time(vcl_front, 61)
    assert best.combination == "--------" and best.prob == 2.1998e-4
    assert min_prob_under_time(vcl_front, math.inf).time == 150
    assert min_prob_under_time(vcl_front, 100).time == 95
    with pytest.raises(InfeasibleError):
        min_prob_under_time(vcl_front, 60)


def test_min_time_under_prob(vcl_front):
    assert min_time_under_prob(vcl_front, 1.0).time == 61
    # cheapest row at or below 2e-4 is the "--c-----" row
    pick = min_time_under_prob(vcl_front, 2.0e-4)
    assert (pick.combination, pick.time) == ("--c-----", 75)
    with pytest.raises(InfeasibleError):
        min_time_under_prob(vcl_front, 1e-4)


def test_front_matches_brute_force():
    fam = load_model(example_path("vcl.fam"))
    rng = random.Random(11)
    idx = rng.sample(range(fam.size), 1000)
    pts = [ParetoPoint(config_at(fam, i), rng.randint(61, 160), rng.choice([1e-4, 2e-4, 3e-4]) * rng.random())
           for i in idx]
    front = pareto_front(pts)
    assert sorted((p.time, p.prob) for p in front) == sorted({(p.time, p.prob) for p in brute_force_front(pts)})
    assert all(p in pts for p in front)
    for t in (61, 100, 160):
        assert min_prob_under_time(pts, t) in front
    for theta in (1e-5, 1e-4, 1.0):
        assert min_time_under_prob(pts, theta) in front


def test_front_with_ties_is_deterministic():
    fam = load_model(example_path("vcl.fam"))
    pts = [ParetoPoint(config_at(fam, i), 70, 1e-4) for i in (5, 3, 9)]
    front = pareto_front(pts)
    assert len(front) == 1 and front[0].config == config_at(fam, 3)
    assert pareto_front(list(reversed(pts))) == front


def test_format_points(vcl_front):
    text = format_points(vcl_front[-1:])
    assert text == "combination,time,prob\n--------,61,0.00021998\n"


FAM = "data out critical; element A reads{} writes{out} p=0.1; protect A with {none,comparison};"


def test_cost_parsing_errors():
    fam = parse_model(FAM)
    ok = parse_cost("block,comparison\nA,4\nbase,10\n", fam)
    assert ok == CostModel(10, {(0, Configuration.from_abbrev(fam, "c").choices[0][1]): 4})
    with pytest.raises(CostError, match="base"):
        parse_cost("block,comparison\nA,4\n", fam)
    with pytest.raises(CostError, match="negative"):
        parse_cost("block,comparison\nA,-4\nbase,10\n", fam)
    with pytest.raises(CostError, match="unknown block"):
        parse_cost("block,comparison\nB,4\nbase,10\n", fam)
    with pytest.raises(CostError, match="header"):
        parse_cost("name,comparison\nA,4\nbase,10\n", fam)
    with pytest.raises(CostError, match="lacks comparison"):
        parse_cost("block,comparison\nA,\nbase,10\n", fam)
    with pytest.raises(CostError, match="not an integer"):
        parse_cost("block,comparison\nA,x\nbase,10\n", fam)


def test_round_time_monotone(vcl):
    fam, cost = vcl
    rng = random.Random(2)
    for _ in range(200):
        i = rng.randrange(fam.size)
        cfg = config_at(fam, i)
        ab = list(cfg.abbrev)
        blanks = [k for k, ch in enumerate(ab) if ch == "-"]
        if not blanks:
            continue
        ab[rng.choice(blanks)] = rng.choice("cvs")
        assert round_time(Configuration.from_abbrev(fam, "".join(ab)), cost) >= round_time(cfg, cost)


def test_front_invariants_random():
    fam = load_model(example_path("pid.fam"))
    rng = random.Random(4)
    for _ in range(50):
        pts = [ParetoPoint(config_at(fam, rng.randrange(64)), rng.randint(0, 9), rng.randint(0, 9) / 10)
               for _ in range(rng.randint(1, 30))]
        front = pareto_front(pts)
        assert not any(a is not b and (a.time <= b.time and a.prob <= b.prob and (a.time < b.time or a.prob < b.prob))
                       for a in front for b in front)
        for p in pts:
            assert p in front or any(q.time <= p.time and q.prob <= p.prob for q in front)
