"""Cost model, Pareto front and the two constrained selection problems."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import Configuration, FamilyModel, Mechanism

COST_COLUMNS = ("comparison", "voting", "sparing")


class InfeasibleError(ValueError):
    """No point satisfies the constraint."""


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    base_round_time: int
    # (block id, mechanism) -> extra time units per round; NONE is implicit 0
    increments: Mapping[tuple[int, Mechanism], int]

    def increment(self, block: int, mech: Mechanism) -> int:
        if mech is Mechanism.NONE:
            return 0
        try:
            return self.increments[(block, mech)]
        except KeyError:
            raise CostError(f"no cost entry for block {block} with {mech.value}") from None

    def check(self, family: FamilyModel) -> None:
        """Every allowed mechanism of every annotated block must be priced."""
        for b, mechs in family.annotations:
            for mech in mechs:
                if mech is not Mechanism.NONE and (b, mech) not in self.increments:
                    name = family.depm.round_body[b].name
                    raise CostError(f"cost file lacks {mech.value} for block {name}")


def round_time(config: Configuration, cost: CostModel) -> int:
    return cost.base_round_time + sum(cost.increment(b, m) for b, m in config.choices)


def parse_cost(text: str, family: FamilyModel) -> CostModel:
    """Read ``block,comparison,voting,sparing`` rows plus a ``base,<int>`` row.

    Empty cells mean the mechanism has no price (and must then not be allowed
    for that block).
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise CostError("empty cost file")
    header = [c.strip().lower() for c in rows[0]]
    if header[:1] != ["block"] or any(h not in COST_COLUMNS for h in header[1:]):
        raise CostError(f"bad cost header {','.join(rows[0])!r}; expected block,comparison,voting,sparing")
    mechs = [Mechanism(h) for h in header[1:]]
    base = None
    inc: dict[tuple[int, Mechanism], int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        name = row[0].strip()
        if name.lower() == "base":
            if len(row) < 2:
                raise CostError(f"line {lineno}: base row needs a value")
            base = _units(row[1], lineno)
            continue
        try:
            block = family.element(name).id
        except KeyError:
            raise CostError(f"line {lineno}: unknown block {name!r}") from None
        if len(row) - 1 > len(mechs):
            raise CostError(f"line {lineno}: too many columns")
        for mech, cell in zip(mechs, row[1:]):
            if cell.strip():
                inc[(block, mech)] = _units(cell, lineno)
    if base is None:
        raise CostError("cost file has no base row")
    cost = CostModel(base, inc)
    cost.check(family)
    return cost


def _units(cell: str, lineno: int) -> int:
    try:
        v = int(cell.strip())
    except ValueError:
        raise CostError(f"line {lineno}: {cell.strip()!r} is not an integer") from None
    if v < 0:
        raise CostError(f"line {lineno}: negative time {v}")
    return v


def load_cost(path, family: FamilyModel) -> CostModel:
    return parse_cost(Path(path).read_text(), family)


# ---------------------------------------------------------------------------
# Pareto analysis


@dataclass(frozen=True)
class ParetoPoint:
    config: Configuration
    time: int
    prob: float

    @property
    def combination(self) -> str:
        return self.config.abbrev


def make_points(configs: Iterable[Configuration], probs: Iterable[float],
                cost: CostModel) -> list[ParetoPoint]:
    return [ParetoPoint(c, round_time(c, cost), float(p)) for c, p in zip(configs, probs)]


def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    return a.time <= b.time and a.prob <= b.prob and (a.time < b.time or a.prob < b.prob)


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated points, most expensive first.

    Points sharing both coordinates collapse onto the one with the smallest
    combination string.
    """
    ordered = sorted(points, key=lambda p: (p.time, p.prob, p.combination))
    front: list[ParetoPoint] = []
    best = math.inf
    for p in ordered:
        if p.prob < best:
            front.append(p)
            best = p.prob
    front.reverse()
    return front


def min_prob_under_time(points: Sequence[ParetoPoint], budget: float) -> ParetoPoint:
    feasible = [p for p in points if p.time <= budget]
    if not feasible:
        raise InfeasibleError(f"no configuration runs within {budget} time units")
    return min(feasible, key=lambda p: (p.prob, p.time, p.combination))


def min_time_under_prob(points: Sequence[ParetoPoint], theta: float) -> ParetoPoint:
    feasible = [p for p in points if p.prob <= theta]
    if not feasible:
        raise InfeasibleError(f"no configuration has failure probability <= {theta}")
    return min(feasible, key=lambda p: (p.time, p.prob, p.combination))


def format_points(points: Iterable[ParetoPoint]) -> str:
    """``combination,time,prob`` CSV."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["combination", "time", "prob"])
    for p in points:
        w.writerow([p.combination, p.time, repr(p.prob)])
    return out.getvalue()
