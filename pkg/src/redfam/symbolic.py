"""All-in-one analysis of a protection family on a symbolic DTMC.

The round matrix ranges over row, column and configuration variables.
Configuration variables select the mechanism of every annotated block and
never change along a transition, so one transient computation yields the
results of every family member at once.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .model import Configuration, Element, FamilyModel, Mechanism, enumerate_configs
from .mtbdd import Manager, Mtbdd
from .patterns import kernel_for

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StateBit:
    name: str
    r: int  # row (current state)
    z: int  # auxiliary copy used as summation index in products
    c: int  # column (successor state)


def _width(values: int) -> int:
    return max(0, math.ceil(math.log2(values))) if values > 1 else 0


class StateEncoding:
    """Boolean encoding of error flags, spare counters, status and
    configuration choices.

    Status is two bits ``(fail, halt)``; FAIL and HALT states have every other
    state bit cleared, so each is a single canonical state.
    """

    def __init__(self, family: FamilyModel, manager: Manager | None = None,
                 config_position: str = "top"):
        if config_position not in ("top", "bottom"):
            raise ValueError("config_position must be 'top' or 'bottom'")
        self.family = family
        self.manager = m = manager or Manager()
        self.config_position = config_position
        depm = family.depm
        self.config: dict[int, list[int]] = {}
        self.state_bits: list[StateBit] = []

        def declare_config():
            for b, mechs in family.annotations:
                name = depm.round_body[b].name
                self.config[b] = [m.add_var(f"cfg.{name}.{i}") for i in range(_width(len(mechs)))]

        def bit(name: str) -> StateBit:
            sb = StateBit(name, m.add_var(f"{name}.r"), m.add_var(f"{name}.z"), m.add_var(f"{name}.c"))
            self.state_bits.append(sb)
            return sb

        if config_position == "top":
            declare_config()
        self.fail = bit("fail")
        self.halt = bit("halt")
        self.flags = [bit(f"err.{d.name}") for d in depm.data]
        self.spare_width = _width(family.spare_count + 1)
        self.spares: dict[int, list[StateBit]] = {}
        for b in family.sparing_blocks():
            name = depm.round_body[b].name
            self.spares[b] = [bit(f"spare.{name}.{i}") for i in range(self.spare_width)]
        if config_position == "bottom":
            declare_config()

        self.row_vars = [sb.r for sb in self.state_bits]
        self.sum_vars = [sb.z for sb in self.state_bits]
        self.col_vars = [sb.c for sb in self.state_bits]
        self.config_vars = [v for b in sorted(self.config) for v in self.config[b]]

    # -- cubes --------------------------------------------------------

    @staticmethod
    def _value_bits(bits: Sequence[StateBit], value: int) -> list[tuple[StateBit, int]]:
        w = len(bits)
        return [(sb, (value >> (w - 1 - i)) & 1) for i, sb in enumerate(bits)]

    def row_cube(self, assignment: Iterable[tuple[StateBit, int]]) -> Mtbdd:
        return self.manager.cube({sb.r: v for sb, v in assignment})

    def col_cube(self, assignment: Iterable[tuple[StateBit, int]]) -> Mtbdd:
        return self.manager.cube({sb.c: v for sb, v in assignment})

    def identity(self, bits: Iterable[StateBit]) -> Mtbdd:
        """``prod [r == c]`` over ``bits``."""
        m = self.manager
        out = m.one
        for sb in sorted(bits, key=lambda s: -m.level_of(s.r)):
            eq = m.from_function([sb.r, sb.c], lambda b: 1.0 if b[0] == b[1] else 0.0)
            out = out * eq
        return out

    def initial_assignment(self) -> list[tuple[StateBit, int]]:
        a = [(self.fail, 0), (self.halt, 0)] + [(sb, 0) for sb in self.flags]
        for bits in self.spares.values():
            a += self._value_bits(bits, self.family.spare_count)
        return a

    def canonical(self, status: str) -> list[tuple[StateBit, int]]:
        """Assignment of the absorbing FAIL or HALT state."""
        a = [(sb, 0) for sb in self.state_bits]
        target = self.fail if status == "FAIL" else self.halt
        return [(sb, 1 if sb is target else v) for sb, v in a]

    def config_cube(self, block: int, code: int) -> Mtbdd:
        bits = self.config[block]
        w = len(bits)
        return self.manager.cube({v: (code >> (w - 1 - i)) & 1 for i, v in enumerate(bits)})

    def config_assignment(self, config: Configuration) -> dict[int, int]:
        out = {}
        for (b, _), code in zip(config.choices, config.codes):
            bits = self.config[b]
            w = len(bits)
            for i, v in enumerate(bits):
                out[v] = (code >> (w - 1 - i)) & 1
        return out

    def valid_configs(self) -> Mtbdd:
        """0/1 indicator of configuration codes naming an allowed mechanism."""
        m = self.manager
        out = m.one
        for b, mechs in self.family.annotations:
            ok = m.zero
            for code in range(len(mechs)):
                ok = ok + self.config_cube(b, code)
            out = out * ok
        return out

    def run_row(self) -> Mtbdd:
        return self.row_cube([(self.fail, 0), (self.halt, 0)])

    def decode_row(self, assignment: dict[int, int]) -> tuple:
        """Row assignment -> ``(status, flags, spares)``."""
        if assignment[self.fail.r]:
            return ("FAIL",)
        if assignment[self.halt.r]:
            return ("HALT",)
        flags = tuple(assignment[sb.r] for sb in self.flags)
        spares = []
        for b in sorted(self.spares):
            val = 0
            for sb in self.spares[b]:
                val = 2 * val + assignment[sb.r]
            spares.append(val)
        return ("RUN", flags, tuple(spares))


@dataclass(frozen=True)
class LocalStep:
    """One micro-transition restricted to the state bits it touches.

    ``kernel`` gives the RUN-row continuation over the read row bits, the
    replaced bits (row and column copies) and the configuration; ``halt`` and
    ``fail`` give the probability of jumping to the absorbing states.
    """
    kernel: Mtbdd
    replaced: tuple[StateBit, ...] = ()
    halt: Mtbdd | None = None
    fail: Mtbdd | None = None


@dataclass
class SymbolicDtmc:
    family: FamilyModel
    encoding: StateEncoding
    round_matrix: Mtbdd | None
    initial: Mtbdd
    steps: list[LocalStep] = field(default_factory=list)
    build_seconds: float = 0.0
    reorder_trace: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def manager(self) -> Manager:
        return self.encoding.manager

    @property
    def composed(self) -> bool:
        return self.round_matrix is not None

    def matrix(self) -> Mtbdd:
        """The round matrix, composed from the steps on first use."""
        if self.round_matrix is None:
            self.round_matrix = _round_matrix(self.family, self.encoding)
        return self.round_matrix

    def step(self, v: Mtbdd) -> Mtbdd:
        enc = self.encoding
        if self.round_matrix is not None:
            return self.manager.vector_matrix(v, self.round_matrix, enc.row_vars, enc.col_vars,
                                              vacant=enc.sum_vars)
        for st in self.steps:
            v = apply_local(st, v, enc)
        return v

    def nodes(self) -> int:
        if self.round_matrix is not None:
            return self.round_matrix.node_count()
        return self.manager.node_count(*(f for st in self.steps
                                         for f in (st.kernel, st.halt, st.fail) if f is not None))


# ---------------------------------------------------------------------------
# construction


def _any_flag(enc: StateEncoding, data: Iterable[int]) -> Mtbdd:
    m = enc.manager
    out = m.zero
    for d in sorted(data):
        out = out.max(m.indicator(enc.flags[d].r))
    return out


def _value_set(enc: StateEncoding, bits: Sequence[StateBit], values: Iterable[int]) -> Mtbdd:
    """0/1 indicator of the counter encoded in ``bits`` (row copy, MSB first)
    taking a value in ``values``."""
    m = enc.manager
    w = len(bits)

    def rec(i: int, vals: list[int]) -> Mtbdd:
        if not vals:
            return m.zero
        if len(vals) == 1 << (w - i):
            return m.one
        half = 1 << (w - i - 1)
        lo = [v for v in vals if v < half]
        hi = [v - half for v in vals if v >= half]
        return m.ite(m.indicator(bits[i].r), rec(i + 1, hi), rec(i + 1, lo))

    return rec(0, sorted(set(values)))


def _decrement(enc: StateEncoding, bits: Sequence[StateBit], delta: int) -> Mtbdd:
    """Relation ``col = row - delta`` on a counter; underflow is excluded."""
    m = enc.manager
    w = len(bits)
    memo: dict[tuple[int, int], Mtbdd] = {}

    def rec(i: int, bout: int) -> Mtbdd:
        # bits i..w-1, producing borrow ``bout`` towards bit i-1
        if i == w:
            return m.one if bout == 0 else m.zero
        key = (i, bout)
        if key in memo:
            return memo[key]
        d = (delta >> (w - 1 - i)) & 1
        out = m.zero
        for r in (0, 1):
            for bin_ in (0, 1):
                diff = r - d - bin_
                if (1 if diff < 0 else 0) != bout:
                    continue
                sub = rec(i + 1, bin_)
                if sub == m.zero:
                    continue
                out = out + m.cube({bits[i].r: r, bits[i].c: diff & 1}) * sub
        memo[key] = out
        return out

    return rec(0, 0)


def _element_kernel(block: Element, family: FamilyModel, enc: StateEncoding,
                    force_none: bool = False) -> LocalStep:
    m = enc.manager
    in_err1 = _any_flag(enc, block.reads)
    in_err0 = 1.0 - in_err1
    spare_bits = enc.spares.get(block.id, [])
    writes = [enc.flags[d] for d in sorted(block.writes)]
    annotated = block.id in enc.config and not force_none
    mechs = family.allowed(block.id) if annotated else (Mechanism.NONE,)
    cont_total, halt_total = m.zero, m.zero
    for code, mech in enumerate(mechs):
        kernel = kernel_for(block, mech, family)
        # rows that differ only by the absolute counter value share one term
        groups: dict[tuple[int, frozenset], list[int]] = {}
        for (in_err, s), dist in kernel.rows.items():
            rel = frozenset(((o, h, None if h else s - s2), q) for (o, h, s2), q in dist.items())
            groups.setdefault((in_err, rel), []).append(s)
        cont, halt = m.zero, m.zero
        for (in_err, rel), svals in groups.items():
            cond = in_err1 if in_err else in_err0
            if cond == m.zero:
                continue
            if spare_bits:
                cond = cond * _value_set(enc, spare_bits, svals)
            c_part, h_part = m.zero, 0.0
            for o, h, delta, q in sorted((o, h, d, q) for (o, h, d), q in rel):
                if h:
                    h_part += q
                    continue
                t = enc.col_cube([(sb, o) for sb in writes])
                if spare_bits:
                    t = t * _decrement(enc, spare_bits, delta)
                c_part = c_part + t * q
            cont = cont + cond * c_part
            if h_part:
                halt = halt + cond * h_part
        if annotated and enc.config[block.id]:
            sel = enc.config_cube(block.id, code)
            cont, halt = cont * sel, halt * sel
        cont_total = cont_total + cont
        halt_total = halt_total + halt
    replaced = tuple(writes) + tuple(spare_bits)
    return LocalStep(cont_total, replaced, None if halt_total == m.zero else halt_total)


def _check_kernel(family: FamilyModel, enc: StateEncoding) -> LocalStep:
    bad = _any_flag(enc, family.depm.critical)
    return LocalStep(1.0 - bad, (), None, bad)


def _reset_kernel(data: Iterable[int], enc: StateEncoding) -> LocalStep:
    cleared = tuple(enc.flags[d] for d in sorted(set(data)))
    return LocalStep(enc.col_cube([(sb, 0) for sb in cleared]), cleared)


def _local_steps(family: FamilyModel, enc: StateEncoding, active: set[int] | None = None):
    depm = family.depm
    for e in depm.round_body:
        force = active is not None and e.id not in active
        yield _element_kernel(e, family, enc, force_none=force)
        after = depm.resets_at(e.id + 1)
        if after:
            yield _reset_kernel(after, enc)
    yield _check_kernel(family, enc)
    start = depm.resets_at(0)
    if start:
        yield _reset_kernel(start, enc)


def apply_local(step: LocalStep, v: Mtbdd, enc: StateEncoding) -> Mtbdd:
    """``v`` times the full matrix of ``step`` without building that matrix."""
    m = enc.manager
    run = enc.run_row()
    v_run = v * run
    out = v - v_run
    cont = m.multiply_abstract(v_run, step.kernel, [sb.r for sb in step.replaced],
                               rename={sb.c: sb.r for sb in step.replaced}, vacant=enc.sum_vars)
    out = out + cont
    for jump, status in ((step.halt, "HALT"), (step.fail, "FAIL")):
        if jump is not None:
            mass = m.multiply_abstract(v_run, jump, enc.row_vars)
            out = out + mass * enc.row_cube(enc.canonical(status))
    return out


def _full_matrix(step: LocalStep, enc: StateEncoding) -> Mtbdd:
    """Expand a local step into a matrix over every row and column bit."""
    run_r = enc.run_row()
    names = {sb.name for sb in step.replaced}
    body = step.kernel * enc.identity(sb for sb in enc.state_bits if sb.name not in names)
    for jump, status in ((step.halt, "HALT"), (step.fail, "FAIL")):
        if jump is not None:
            body = body + jump * enc.col_cube(enc.canonical(status))
    return run_r * body + (1.0 - run_r) * enc.identity(enc.state_bits)


def build_element_step(block: Element, family: FamilyModel, enc: StateEncoding,
                       force_none: bool = False) -> Mtbdd:
    """Stochastic matrix of one execution of ``block`` for every configuration.

    ``force_none`` pins the block to the unprotected mechanism regardless of
    its annotation (used when building subfamilies).
    """
    return _full_matrix(_element_kernel(block, family, enc, force_none), enc)


def build_check_step(family: FamilyModel, enc: StateEncoding) -> Mtbdd:
    """End-of-round failure check: RUN with a critical flag set -> FAIL."""
    return _full_matrix(_check_kernel(family, enc), enc)


def build_reset_step(data: Iterable[int], enc: StateEncoding) -> Mtbdd:
    return _full_matrix(_reset_kernel(data, enc), enc)


def compose(a: Mtbdd, b: Mtbdd, enc: StateEncoding) -> Mtbdd:
    """Matrix product ``a . b`` of two matrices over row/column variables."""
    m = enc.manager
    a_z = m.rename(a, dict(zip(enc.col_vars, enc.sum_vars)))
    b_z = m.rename(b, dict(zip(enc.row_vars, enc.sum_vars)))
    return m.matrix_multiply(a_z, b_z, enc.row_vars, enc.col_vars, enc.sum_vars)


def _round_matrix(family: FamilyModel, enc: StateEncoding, active: set[int] | None = None) -> Mtbdd:
    r = None
    for st in _local_steps(family, enc, active):
        full = _full_matrix(st, enc)
        r = full if r is None else compose(r, full, enc)
    return r


def build_round_matrix(family: FamilyModel, *, manager: Manager | None = None,
                       config_position: str = "top", reorder: str = "none",
                       compose_round: bool = True) -> SymbolicDtmc:
    """Symbolic DTMC of the whole family.

    With ``compose_round`` the element steps are multiplied into a single
    round matrix; otherwise the steps are kept separate and applied to the
    state vector one after another, which avoids the round matrix when it
    grows much larger than the vectors.  ``reorder`` is ``"none"``,
    ``"final"`` (sift once after building) or ``"iterative"`` (see
    :func:`iterative_family_build`).
    """
    if reorder == "iterative":
        return iterative_family_build(family, manager=manager, config_position=config_position,
                                      compose_round=compose_round)
    if reorder not in ("none", "final"):
        raise ValueError(f"unknown reorder schedule {reorder!r}")
    t0 = time.perf_counter()
    enc = StateEncoding(family, manager, config_position)
    steps = list(_local_steps(family, enc))
    r = _round_matrix(family, enc) if compose_round else None
    init = enc.row_cube(enc.initial_assignment())
    dtmc = SymbolicDtmc(family, enc, r, init, steps)
    if reorder == "final":
        pre = enc.manager.live_nodes
        rep = enc.manager.sift_reorder()
        dtmc.reorder_trace.append((len(family.annotations), pre, rep.nodes_after))
    dtmc.build_seconds = time.perf_counter() - t0
    logger.info("symbolic model: %d nodes in %.2fs", dtmc.nodes(), dtmc.build_seconds)
    return dtmc


def iterative_family_build(family: FamilyModel, *, manager: Manager | None = None,
                           config_position: str = "top", compose_round: bool = True) -> SymbolicDtmc:
    """Build subfamilies with one more annotated block each time, sifting
    after every addition so the final build starts from a learned order."""
    t0 = time.perf_counter()
    enc = StateEncoding(family, manager, config_position)
    m = enc.manager
    blocks = list(family.annotated)
    trace = []
    r = steps = None
    for k in range(len(blocks) + 1):
        r = steps = None  # drop the previous subfamily before building the next
        active = set(blocks[:k])
        steps = list(_local_steps(family, enc, active))
        if compose_round:
            r = _round_matrix(family, enc, active)
        m.collect_garbage()
        pre = m.live_nodes
        rep = m.sift_reorder()
        trace.append((k, pre, rep.nodes_after))
    init = enc.row_cube(enc.initial_assignment())
    dtmc = SymbolicDtmc(family, enc, r, init, steps, reorder_trace=trace)
    dtmc.build_seconds = time.perf_counter() - t0
    return dtmc


# ---------------------------------------------------------------------------
# analysis


def _target_mass(dtmc: SymbolicDtmc, v: Mtbdd, count_halt: bool) -> Mtbdd:
    enc = dtmc.encoding
    m = enc.manager
    target = m.indicator(enc.fail.r)
    if count_halt:
        target = target + m.indicator(enc.halt.r)
    return m.sum_abstract(v * target, enc.row_vars)


def transient(dtmc: SymbolicDtmc, n: int) -> Mtbdd:
    if n < 0:
        raise ValueError("number of rounds must be non-negative")
    v = dtmc.initial
    for _ in range(n):
        v = dtmc.step(v)
    return v


def pfail(dtmc: SymbolicDtmc, n: int, count_halt: bool = False) -> Mtbdd:
    """Probability of reaching FAIL within ``n`` rounds, per configuration."""
    return _target_mass(dtmc, transient(dtmc, n), count_halt)


def phalt(dtmc: SymbolicDtmc, n: int) -> Mtbdd:
    enc = dtmc.encoding
    v = transient(dtmc, n)
    return dtmc.manager.sum_abstract(v * dtmc.manager.indicator(enc.halt.r), enc.row_vars)


def pfail_and_phalt(dtmc: SymbolicDtmc, n: int, count_halt: bool = False) -> tuple[Mtbdd, Mtbdd]:
    enc = dtmc.encoding
    m = dtmc.manager
    v = transient(dtmc, n)
    halt = m.sum_abstract(v * m.indicator(enc.halt.r), enc.row_vars)
    return _target_mass(dtmc, v, count_halt), halt


@dataclass
class QuantileResult:
    rounds: Mtbdd  # per configuration
    censored: Mtbdd  # 0/1 per configuration
    n_max: int


def qround(dtmc: SymbolicDtmc, theta: float, n_max: int, count_halt: bool = False) -> QuantileResult:
    """Largest ``n <= n_max`` with ``pfail(n) <= theta`` for every configuration."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"threshold {theta} outside (0,1)")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    m = dtmc.manager
    alive = dtmc.encoding.valid_configs()
    q = m.zero
    v = dtmc.initial
    for _ in range(n_max):
        v = dtmc.step(v)
        ok = m.threshold(_target_mass(dtmc, v, count_halt), theta, above=False)
        alive = alive * ok
        if alive == m.zero:
            break
        q = q + alive
    return QuantileResult(q, alive, n_max)


def per_config(dtmc: SymbolicDtmc, f: Mtbdd,
               configs: Sequence[Configuration] | None = None) -> list[float]:
    """Extract the value of a configuration-only diagram for each member."""
    enc = dtmc.encoding
    configs = enumerate_configs(dtmc.family) if configs is None else configs
    table = dtmc.manager.enumerate_terminals(f, enc.config_vars)
    out = []
    for cfg in configs:
        a = enc.config_assignment(cfg)
        out.append(table[tuple(a[v] for v in enc.config_vars)])
    return out


def restrict_to(dtmc: SymbolicDtmc, f: Mtbdd, config: Configuration) -> Mtbdd:
    return f.restrict(dtmc.encoding.config_assignment(config))


def member(dtmc: SymbolicDtmc, config: Configuration) -> SymbolicDtmc:
    """The single family member obtained by fixing the configuration bits."""
    r = restrict_to(dtmc, dtmc.matrix(), config)
    return SymbolicDtmc(dtmc.family, dtmc.encoding, r, dtmc.initial)


def reachable(dtmc: SymbolicDtmc) -> Mtbdd:
    """0/1 diagram of (row state, configuration) pairs reachable from the
    initial state."""
    m = dtmc.manager
    enc = dtmc.encoding
    support = m.threshold(dtmc.matrix(), 0.0, strict=True)
    reach = dtmc.initial * enc.valid_configs()
    while True:
        img = m.vector_matrix(reach, support, enc.row_vars, enc.col_vars)
        nxt = reach.max(m.threshold(img, 0.0, strict=True))
        if nxt == reach:
            return reach
        reach = nxt


def stochasticity_defect(dtmc: SymbolicDtmc) -> float:
    """Max ``|sum_c R[r,c] - 1|`` over reachable rows of valid configurations."""
    m = dtmc.manager
    enc = dtmc.encoding
    rowsum = m.sum_abstract(dtmc.matrix(), enc.col_vars)
    dev = m.map_terminals(rowsum - 1.0, abs) * reachable(dtmc)
    return max(m.terminal_values(dev))


def reachable_state_count(dtmc: SymbolicDtmc) -> int:
    """Number of reachable (state, configuration) pairs."""
    m = dtmc.manager
    enc = dtmc.encoding
    total = m.sum_abstract(reachable(dtmc), enc.row_vars + enc.config_vars)
    return int(round(total.value))
