import pytest

from redfam import example_path
from redfam.model import Mechanism, SparingMode, load_model
from redfam.patterns import (
    kernel_comparison,
    kernel_for,
    kernel_none,
    kernel_sparing,
    kernel_voting,
)

from oracles import replica_outcomes

PS = [1e-5, 1e-3, 0.1, 0.5]


def close_dist(a, b, tol=1e-15):
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in keys)


def test_none_examples():
    assert dict(kernel_none(0.0).dist(0)) == {(0, 0, 0): 1.0}
    assert dict(kernel_none(0.5).dist(0)) == {(0, 0, 0): 0.5, (1, 0, 0): 0.5}
    assert dict(kernel_none(0.37).dist(1)) == {(1, 0, 0): 1.0}


def test_comparison_examples():
    k = kernel_comparison(0.1)
    assert k.prob(0, out_err=0) == pytest.approx(0.81, abs=1e-15)
    assert k.prob(0, halt=1) == pytest.approx(0.18, abs=1e-15)
    assert k.prob(0, out_err=1) == pytest.approx(0.01, abs=1e-15)
    assert dict(kernel_comparison(0.0).dist(0)) == {(0, 0, 0): 1.0}
    assert dict(kernel_comparison(1.0).dist(0)) == {(1, 0, 0): 1.0}
    assert dict(k.dist(1)) == {(1, 0, 0): 1.0}


def test_voting_examples():
    assert kernel_voting(0.1).prob(0, out_err=1) == pytest.approx(0.028, abs=1e-15)
    assert kernel_voting(0.5).prob(0, out_err=1) == pytest.approx(0.5, abs=1e-15)
    assert kernel_voting(0.0).prob(0, out_err=1) == 0.0
    assert kernel_voting(0.1).prob(0, halt=1) == 0.0


@pytest.mark.parametrize("p", PS)
def test_closed_forms_against_enumeration(p):
    comp = replica_outcomes("comparison", p)
    vote = replica_outcomes("voting", p)
    assert abs(comp[(1, 0, 0)] - p * p) <= 1e-15
    assert abs(comp[(0, 1, 0)] - 2 * p * (1 - p)) <= 1e-15
    assert abs(vote[(1, 0, 0)] - (3 * p ** 2 - 2 * p ** 3)) <= 1e-15
    for in_err in (0, 1):
        assert close_dist(kernel_none(p).dist(in_err), replica_outcomes("none", p, in_err))
        assert close_dist(kernel_comparison(p).dist(in_err), replica_outcomes("comparison", p, in_err))
        assert close_dist(kernel_voting(p).dist(in_err), replica_outcomes("voting", p, in_err))


@pytest.mark.parametrize("p", PS)
@pytest.mark.parametrize("coverage", [1.0, 0.7])
@pytest.mark.parametrize("mode", [SparingMode.TAKEOVER_AFTER, SparingMode.RECOMPUTE])
def test_sparing_against_enumeration(p, coverage, mode):
    k = kernel_sparing(p, coverage, mode, spare_count=2)
    for in_err in (0, 1):
        for s in range(3):
            ref = replica_outcomes("sparing", p, in_err, s, coverage, mode.value)
            assert close_dist(k.dist(in_err, s), ref)
            assert abs(sum(k.dist(in_err, s).values()) - 1.0) <= 1e-15


def test_takeover_example():
    k = kernel_sparing(0.1, 1.0, SparingMode.TAKEOVER_AFTER, 2)
    assert dict(k.dist(0, 2)) == pytest.approx({(0, 0, 2): 0.9, (1, 0, 1): 0.1})
    # per-execution error probability equals the unprotected block
    assert k.prob(0, 2, out_err=1) == pytest.approx(kernel_none(0.1).prob(0, out_err=1))


def test_takeover_without_spares_halts():
    k = kernel_sparing(0.1, 1.0, SparingMode.TAKEOVER_AFTER, 2)
    assert k.prob(0, 0, halt=1) == pytest.approx(0.1)


def test_recompute_example():
    # a detected fault triggers a recomputation on a spare; with both spares
    # used up by detected faults the block halts instead of emitting
    k = kernel_sparing(0.1, 1.0, SparingMode.RECOMPUTE, 2)
    d = k.dist(0, 2)
    assert k.prob(0, 2, out_err=0) == pytest.approx(0.999, abs=1e-15)
    assert k.prob(0, 2, halt=1) == pytest.approx(0.001, abs=1e-15)
    assert k.prob(0, 2, out_err=1) == 0.0
    assert d[(0, 0, 2)] == pytest.approx(0.9)
    assert d[(0, 0, 1)] == pytest.approx(0.09)
    assert d[(0, 0, 0)] == pytest.approx(0.009)


@pytest.mark.parametrize("mode", list(SparingMode))
def test_sparing_fault_free(mode):
    k = kernel_sparing(0.0, 0.5, mode, 2)
    for s in range(3):
        assert dict(k.dist(0, s)) == {(0, 0, s): 1.0}


def test_invalid_parameters():
    with pytest.raises(ValueError):
        kernel_none(1.5)
    with pytest.raises(ValueError):
        kernel_sparing(0.1, coverage=-0.1)
    with pytest.raises(ValueError):
        kernel_sparing(0.1, spare_count=-1)


def test_kernel_for_dispatch():
    fam = load_model(example_path("pid.fam"))
    p_term = fam.element("P")
    p = 1e-5
    assert dict(kernel_for(p_term, Mechanism.NONE, fam).dist(0, 2)) == {(0, 0, 2): 1 - p, (1, 0, 2): p}
    vote = kernel_for(p_term, Mechanism.VOTING, fam)
    assert vote.prob(0, 2, out_err=1) == pytest.approx(3e-10 - 2e-15, rel=1e-12)
    comp = kernel_for(p_term, Mechanism.COMPARISON, fam)
    assert comp.prob(0, 2, halt=1) == pytest.approx(2 * 1e-5 * (1 - 1e-5), rel=1e-12)
    with pytest.raises(ValueError):
        kernel_for(fam.element("Sum"), Mechanism.VOTING, fam)
