"""Per-execution stochastic kernels of the protection mechanisms.

A kernel maps the input state of one block execution, ``(in_err, spares)``,
to a distribution over outcomes ``(out_err, halt, spares')``.  Replicas of a
block fault independently; when several replicas fault they agree on the
same wrong value, so comparison and voting cannot unmask common errors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

from .model import Element, FamilyModel, Mechanism, SparingMode

Outcome = tuple[int, int, int]  # (out_err, halt, spares')


@dataclass(frozen=True)
class Kernel:
    spare_count: int
    rows: Mapping[tuple[int, int], Mapping[Outcome, float]]

    def dist(self, in_err: int, spares: int = 0) -> Mapping[Outcome, float]:
        return self.rows[(in_err, spares)]

    def inputs(self) -> Iterator[tuple[int, int]]:
        return iter(self.rows)

    def prob(self, in_err: int, spares: int = 0, *, out_err: int | None = None,
             halt: int | None = None) -> float:
        """Total probability of the outcomes matching the given fields."""
        total = 0.0
        for (o, h, _), q in self.dist(in_err, spares).items():
            if (out_err is None or (o == out_err and not h)) and (halt is None or h == halt):
                total += q
        return total


def _check_prob(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} {v} outside [0,1]")


def _row(entries) -> dict[Outcome, float]:
    row: dict[Outcome, float] = {}
    for outcome, q in entries:
        if q > 0.0:
            row[outcome] = row.get(outcome, 0.0) + q
    return row


def _passthrough(spare_count: int, body) -> Kernel:
    rows = {}
    for in_err in (0, 1):
        for s in range(spare_count + 1):
            rows[(in_err, s)] = _row(body(in_err, s))
    return Kernel(spare_count, rows)


def kernel_none(p: float, spare_count: int = 0) -> Kernel:
    _check_prob("fault probability", p)

    def body(in_err, s):
        if in_err:
            return [((1, 0, s), 1.0)]
        return [((0, 0, s), 1.0 - p), ((1, 0, s), p)]

    return _passthrough(spare_count, body)


def kernel_comparison(p: float, spare_count: int = 0) -> Kernel:
    """Duplicate and compare; a mismatch halts the system."""
    _check_prob("fault probability", p)
    q = 1.0 - p

    def body(in_err, s):
        if in_err:
            return [((1, 0, s), 1.0)]
        return [((0, 0, s), q * q), ((0, 1, s), 2.0 * p * q), ((1, 0, s), p * p)]

    return _passthrough(spare_count, body)


def kernel_voting(p: float, spare_count: int = 0) -> Kernel:
    """Triplicate and take the majority."""
    _check_prob("fault probability", p)
    q = 1.0 - p

    def body(in_err, s):
        if in_err:
            return [((1, 0, s), 1.0)]
        return [((0, 0, s), q * q * (1.0 + 2.0 * p)), ((1, 0, s), p * p * (3.0 - 2.0 * p))]

    return _passthrough(spare_count, body)


def kernel_sparing(p: float, coverage: float = 1.0,
                   mode: SparingMode = SparingMode.TAKEOVER_AFTER,
                   spare_count: int = 2) -> Kernel:
    """One active unit plus ``spare_count`` standby units.

    The block's own faults are independent of its input, so spare
    consumption happens for erroneous inputs too; the output then stays
    erroneous regardless.
    """
    _check_prob("fault probability", p)
    _check_prob("coverage", coverage)
    if spare_count < 0:
        raise ValueError(f"spare count {spare_count} is negative")
    c = coverage

    if mode is SparingMode.TAKEOVER_AFTER:
        def body(in_err, s):
            out = [((in_err, 0, s), 1.0 - p), ((1, 0, s), p * (1.0 - c))]
            if s > 0:
                out.append(((1, 0, s - 1), p * c))
            else:
                out.append(((in_err, 1, 0), p * c))
            return out
    elif mode is SparingMode.RECOMPUTE:
        def body(in_err, s):
            out = []
            reach = 1.0  # probability that the k-th unit gets to run
            for k in range(s + 1):
                left = s - k
                out.append(((in_err, 0, left), reach * (1.0 - p)))
                out.append(((1, 0, left), reach * p * (1.0 - c)))
                reach *= p * c
            out.append(((in_err, 1, 0), reach))
            return out
    else:
        raise ValueError(f"unknown sparing mode {mode!r}")
    return _passthrough(spare_count, body)


def kernel_for(block: Element, mech: Mechanism, family: FamilyModel) -> Kernel:
    allowed = family.allowed(block.id)
    if mech not in allowed:
        raise ValueError(f"mechanism {mech.value} not allowed for block {block.name}")
    spares = family.spare_count if Mechanism.SPARING in allowed else 0
    p = block.fault_prob
    if mech is Mechanism.NONE:
        return kernel_none(p, spares)
    if mech is Mechanism.COMPARISON:
        return kernel_comparison(p, spares)
    if mech is Mechanism.VOTING:
        return kernel_voting(p, spares)
    return kernel_sparing(p, family.coverage, family.sparing_mode, spares)
