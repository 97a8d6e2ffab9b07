"""Explicit-state engine: one configuration at a time.

Serves as the independent oracle for the symbolic engine and as the
one-by-one baseline whose cost is extrapolated to the whole family.
"""
from __future__ import annotations

import logging
import random
import re
import statistics
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .model import Configuration, FamilyModel, config_at
from .patterns import kernel_for

logger = logging.getLogger(__name__)

FAIL = 0
HALT = 1
DEFAULT_STATE_BUDGET = 10 ** 7


class StateBudgetExceeded(RuntimeError):
    pass


@dataclass
class ExplicitDtmc:
    config: Configuration
    # index -> ("FAIL",) | ("HALT",) | ("RUN", flags, spares)
    states: list[tuple]
    matrix: sp.csr_matrix
    initial: int = 2
    _transposed: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def num_states(self) -> int:
        return len(self.states)

    def step(self, v: np.ndarray) -> np.ndarray:
        if self._transposed is None:
            self._transposed = self.matrix.T.tocsr()
        return self._transposed @ v


@dataclass(frozen=True)
class _Exec:
    reads: int
    writes: int
    slot: int | None
    rows: dict
    resets_after: int


def _plan(family: FamilyModel, config: Configuration):
    depm = family.depm
    slots = {b: i for i, b in enumerate(family.sparing_blocks())}
    plan = []
    for e in depm.round_body:
        kernel = kernel_for(e, config.mechanism(e.id), family)
        rows = {key: [(o, h, s2, q) for (o, h, s2), q in dist.items()]
                for key, dist in kernel.rows.items()}
        plan.append(_Exec(
            reads=sum(1 << d for d in e.reads),
            writes=sum(1 << d for d in e.writes),
            slot=slots.get(e.id),
            rows=rows,
            resets_after=sum(1 << d for d in depm.resets_at(e.id + 1)),
        ))
    critical = sum(1 << d for d in depm.critical)
    start_resets = sum(1 << d for d in depm.resets_at(0))
    init_spares = tuple(family.spare_count for _ in slots)
    return plan, critical, start_resets, init_spares


def _round(state: tuple[int, tuple], plan, critical: int, start_resets: int):
    """Distribution over end-of-round states reached from a RUN state."""
    dist = {state: 1.0}
    halt_mass = 0.0
    for ex in plan:
        nxt: dict = {}
        keep = ~ex.writes
        clear = ~ex.resets_after
        for (fl, spares), pr in dist.items():
            in_err = 1 if fl & ex.reads else 0
            s = spares[ex.slot] if ex.slot is not None else 0
            for out, halt, s2, q in ex.rows[(in_err, s)]:
                if halt:
                    halt_mass += pr * q
                    continue
                nfl = ((fl | ex.writes) if out else (fl & keep)) & clear
                nsp = spares if s2 == s else spares[:ex.slot] + (s2,) + spares[ex.slot + 1:]
                key = (nfl, nsp)
                nxt[key] = nxt.get(key, 0.0) + pr * q
        dist = nxt
    fail_mass = 0.0
    out: dict = {}
    for (fl, spares), pr in dist.items():
        if fl & critical:
            fail_mass += pr
        else:
            key = (fl & ~start_resets, spares)
            out[key] = out.get(key, 0.0) + pr
    return out, fail_mass, halt_mass


def build_explicit(family: FamilyModel, config: Configuration,
                   state_budget: int = DEFAULT_STATE_BUDGET) -> ExplicitDtmc:
    """Reachable one-round chain of a single configuration, BFS-numbered.

    Indices 0 and 1 are the absorbing FAIL and HALT states, the initial state
    is index 2.
    """
    plan, critical, start_resets, init_spares = _plan(family, config)
    nd = len(family.depm.data)
    init = (0, init_spares)
    index = {init: 2}
    order = [init]
    rows, cols, vals = [FAIL, HALT], [FAIL, HALT], [1.0, 1.0]
    queue = deque([init])
    while queue:
        st = queue.popleft()
        i = index[st]
        succ, fail_mass, halt_mass = _round(st, plan, critical, start_resets)
        if fail_mass > 0.0:
            rows.append(i)
            cols.append(FAIL)
            vals.append(fail_mass)
        if halt_mass > 0.0:
            rows.append(i)
            cols.append(HALT)
            vals.append(halt_mass)
        for nst, pr in succ.items():
            j = index.get(nst)
            if j is None:
                j = len(order) + 2
                if j >= state_budget:
                    raise StateBudgetExceeded(f"more than {state_budget} states")
                index[nst] = j
                order.append(nst)
                queue.append(nst)
            rows.append(i)
            cols.append(j)
            vals.append(pr)
    n = len(order) + 2
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    states: list[tuple] = [("FAIL",), ("HALT",)]
    for fl, spares in order:
        states.append(("RUN", tuple((fl >> d) & 1 for d in range(nd)), spares))
    return ExplicitDtmc(config, states, matrix)


def _initial_vector(dtmc: ExplicitDtmc) -> np.ndarray:
    v = np.zeros(dtmc.num_states)
    v[dtmc.initial] = 1.0
    return v


def _mass(v: np.ndarray, count_halt: bool) -> float:
    return float(v[FAIL] + v[HALT]) if count_halt else float(v[FAIL])


def transient_explicit(dtmc: ExplicitDtmc, n: int) -> np.ndarray:
    if n < 0:
        raise ValueError("number of rounds must be non-negative")
    v = _initial_vector(dtmc)
    for _ in range(n):
        v = dtmc.step(v)
    return v


def pfail_explicit(dtmc: ExplicitDtmc, n: int, count_halt: bool = False) -> float:
    return _mass(transient_explicit(dtmc, n), count_halt)


def phalt_explicit(dtmc: ExplicitDtmc, n: int) -> float:
    return float(transient_explicit(dtmc, n)[HALT])


def qround_explicit(dtmc: ExplicitDtmc, theta: float, n_max: int,
                    count_halt: bool = False) -> tuple[int, bool]:
    """``(q, censored)``: the last round before ``pfail`` exceeds ``theta``."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"threshold {theta} outside (0,1)")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    v = _initial_vector(dtmc)
    for k in range(1, n_max + 1):
        v = dtmc.step(v)
        if _mass(v, count_halt) > theta:
            return k - 1, False
    return n_max, True


# ---------------------------------------------------------------------------
# one-by-one driver


@dataclass(frozen=True)
class PropertySpec:
    rounds: int | None = None
    theta: float | None = None
    n_max: int = 1000
    count_halt: bool = False


@dataclass
class ConfigRow:
    index: int
    config: Configuration
    pfail: float | None = None
    phalt: float | None = None
    qround: int | None = None
    censored: bool = False
    states: int | None = None
    build_seconds: float = 0.0
    analysis_seconds: float = 0.0
    error: str | None = None

    @property
    def seconds(self) -> float:
        return self.build_seconds + self.analysis_seconds


@dataclass
class TimingReport:
    sampled: int
    family_size: int
    total_seconds: float
    mean_seconds: float
    stdev_seconds: float

    @property
    def extrapolated_seconds(self) -> float:
        return self.mean_seconds * self.family_size


def parse_sample(text: str) -> str | tuple[str, float, int]:
    """``all``, ``K@SEED`` or ``P%@SEED``."""
    if text == "all":
        return "all"
    m = re.fullmatch(r"(\d+(?:\.\d+)?)(%?)@(\d+)", text)
    if not m:
        raise ValueError(f"bad sample spec {text!r}; expected all, K@SEED or P%@SEED")
    kind = "percent" if m.group(2) else "count"
    return kind, float(m.group(1)), int(m.group(3))


def sample_indices(size: int, sample) -> list[int]:
    if isinstance(sample, str):
        sample = parse_sample(sample)
    if sample == "all":
        return list(range(size))
    kind, amount, seed = sample
    k = int(size * amount / 100.0) if kind == "percent" else int(amount)
    k = max(0, min(size, k))
    return sorted(random.Random(seed).sample(range(size), k))


def run_config(family: FamilyModel, index: int, prop: PropertySpec,
               state_budget: int = DEFAULT_STATE_BUDGET) -> ConfigRow:
    config = config_at(family, index)
    row = ConfigRow(index, config)
    t0 = time.perf_counter()
    try:
        dtmc = build_explicit(family, config, state_budget)
    except StateBudgetExceeded as exc:
        row.error = str(exc)
        row.build_seconds = time.perf_counter() - t0
        return row
    t1 = time.perf_counter()
    row.build_seconds = t1 - t0
    row.states = dtmc.num_states
    if prop.rounds is not None:
        v = transient_explicit(dtmc, prop.rounds)
        row.pfail = _mass(v, prop.count_halt)
        row.phalt = float(v[HALT])
    if prop.theta is not None:
        row.qround, row.censored = qround_explicit(dtmc, prop.theta, prop.n_max, prop.count_halt)
    row.analysis_seconds = time.perf_counter() - t1
    return row


def _run_star(args):
    return run_config(*args)


def one_by_one(family: FamilyModel, prop: PropertySpec, sample="all", jobs: int = 1,
               state_budget: int = DEFAULT_STATE_BUDGET,
               indices: Sequence[int] | None = None) -> tuple[list[ConfigRow], TimingReport]:
    """Analyse each sampled configuration in isolation.

    ``indices`` overrides ``sample``.  Rows come back in configuration order
    whatever the completion order.
    """
    if indices is None:
        indices = sample_indices(family.size, sample)
    tasks = [(family, i, prop, state_budget) for i in indices]
    t0 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_star, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        rows = [run_config(*t) for t in tasks]
    total = time.perf_counter() - t0
    rows.sort(key=lambda r: r.index)
    per = [r.seconds for r in rows]
    report = TimingReport(
        sampled=len(rows),
        family_size=family.size,
        total_seconds=total,
        mean_seconds=statistics.fmean(per) if per else 0.0,
        stdev_seconds=statistics.stdev(per) if len(per) > 1 else 0.0,
    )
    return rows, report
