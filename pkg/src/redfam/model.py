"""Error-propagation models, protection annotations and the model DSL.

A model describes one round of a control loop as a linear sequence of
elements.  Each element reads and writes data elements and faults with a
fixed probability per execution.  Annotations attach the set of protection
mechanisms that may be chosen for an element; the cross product of all
annotations is the family of configurations.

Grammar (``#`` starts a comment, statements end with ``;``)::

    data <name> [critical];
    element <name> reads{<name>,...} writes{<name>,...} p=<float>;
    protect <element> with {none,comparison,voting,sparing};
    sparing spares=<int> coverage=<float> mode=<takeover|recompute>;
"""
from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence


class ModelError(ValueError):
    """Raised for malformed or invalid model documents."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}:{col}: {message}"
        super().__init__(message)


class Mechanism(enum.Enum):
    NONE = "none"
    COMPARISON = "comparison"
    VOTING = "voting"
    SPARING = "sparing"

    @property
    def abbrev(self) -> str:
        return _ABBREV[self]

    @classmethod
    def from_abbrev(cls, ch: str) -> "Mechanism":
        for mech, a in _ABBREV.items():
            if a == ch:
                return mech
        raise ValueError(f"unknown mechanism abbreviation {ch!r}")


_ABBREV = {
    Mechanism.NONE: "-",
    Mechanism.COMPARISON: "c",
    Mechanism.VOTING: "v",
    Mechanism.SPARING: "s",
}


class SparingMode(enum.Enum):
    TAKEOVER_AFTER = "takeover"
    RECOMPUTE = "recompute"


@dataclass(frozen=True)
class DataElement:
    id: int
    name: str
    critical: bool = False


@dataclass(frozen=True)
class Element:
    id: int
    name: str
    reads: frozenset[int]
    writes: frozenset[int]
    fault_prob: float


@dataclass(frozen=True)
class Depm:
    """Round-structured error propagation model.

    ``resets`` holds ``(gap, datum)`` pairs.  Gap ``k >= 1`` lies directly
    after element ``k - 1``; gap ``0`` lies after the end-of-round failure
    check, i.e. before the first element of the next round.
    """

    data: tuple[DataElement, ...]
    round_body: tuple[Element, ...]
    resets: tuple[tuple[int, int], ...] = ()

    @property
    def critical(self) -> frozenset[int]:
        return frozenset(d.id for d in self.data if d.critical)

    def resets_at(self, gap: int) -> tuple[int, ...]:
        return tuple(d for g, d in self.resets if g == gap)


@dataclass(frozen=True)
class FamilyModel:
    depm: Depm
    # (element id, allowed mechanisms) sorted by element id
    annotations: tuple[tuple[int, tuple[Mechanism, ...]], ...] = ()
    spare_count: int = 2
    coverage: float = 1.0
    sparing_mode: SparingMode = SparingMode.TAKEOVER_AFTER

    @property
    def annotated(self) -> tuple[int, ...]:
        return tuple(b for b, _ in self.annotations)

    def allowed(self, element_id: int) -> tuple[Mechanism, ...]:
        for b, mechs in self.annotations:
            if b == element_id:
                return mechs
        return (Mechanism.NONE,)

    def sparing_blocks(self) -> tuple[int, ...]:
        """Annotated elements that may be configured with sparing."""
        return tuple(b for b, mechs in self.annotations if Mechanism.SPARING in mechs)

    @property
    def size(self) -> int:
        return math.prod(len(m) for _, m in self.annotations)

    def element(self, name: str) -> Element:
        for e in self.depm.round_body:
            if e.name == name:
                return e
        raise KeyError(name)

    def with_depm(self, depm: Depm) -> "FamilyModel":
        return replace(self, depm=depm)


@dataclass(frozen=True, order=True)
class Configuration:
    """One family member: a mechanism per annotated element."""

    choices: tuple[tuple[int, Mechanism], ...] = field(compare=False)
    # position of each choice within its allowed set; drives ordering
    codes: tuple[int, ...] = ()

    def mechanism(self, element_id: int) -> Mechanism:
        for b, m in self.choices:
            if b == element_id:
                return m
        return Mechanism.NONE

    @property
    def abbrev(self) -> str:
        return "".join(m.abbrev for _, m in self.choices)

    def as_dict(self) -> dict[int, Mechanism]:
        return dict(self.choices)

    @classmethod
    def from_abbrev(cls, family: FamilyModel, text: str) -> "Configuration":
        text = text.replace(" ", "")
        if len(text) != len(family.annotations):
            raise ValueError(
                f"combination {text!r} has {len(text)} entries, family has "
                f"{len(family.annotations)} annotated blocks")
        return make_configuration(
            family, {b: Mechanism.from_abbrev(ch) for (b, _), ch in zip(family.annotations, text)})


def make_configuration(family: FamilyModel, chosen: dict[int, Mechanism]) -> Configuration:
    choices = []
    codes = []
    for b, mechs in family.annotations:
        m = chosen.get(b, Mechanism.NONE)
        if m not in mechs:
            name = family.depm.round_body[b].name
            raise ValueError(f"mechanism {m.value} not allowed for block {name}")
        choices.append((b, m))
        codes.append(mechs.index(m))
    return Configuration(tuple(choices), tuple(codes))


def enumerate_configs(family: FamilyModel) -> list[Configuration]:
    """All configurations, lexicographic over (block id, declared mechanism order)."""
    blocks = [b for b, _ in family.annotations]
    out = []
    for codes in itertools.product(*(range(len(m)) for _, m in family.annotations)):
        choices = tuple((b, family.annotations[i][1][c]) for i, (b, c) in enumerate(zip(blocks, codes)))
        out.append(Configuration(choices, codes))
    return out


def config_index(family: FamilyModel, config: Configuration) -> int:
    """Position of ``config`` in :func:`enumerate_configs` order."""
    idx = 0
    for (_, mechs), code in zip(family.annotations, config.codes):
        idx = idx * len(mechs) + code
    return idx


def config_at(family: FamilyModel, index: int) -> Configuration:
    codes = []
    for _, mechs in reversed(family.annotations):
        index, c = divmod(index, len(mechs))
        codes.append(c)
    codes.reverse()
    choices = tuple((b, mechs[c]) for (b, mechs), c in zip(family.annotations, codes))
    return Configuration(choices, tuple(codes))


# ---------------------------------------------------------------------------
# validation


def validate(family: FamilyModel) -> list[str]:
    """Return human-readable diagnostics; empty iff the model is well formed."""
    diags: list[str] = []
    depm = family.depm
    data = depm.data
    nd = len(data)
    for i, d in enumerate(data):
        if d.id != i:
            diags.append(f"data element {d.name}: id {d.id} is not dense (expected {i})")
    _duplicates(diags, "data element", [d.name for d in data])
    if not any(d.critical for d in data):
        diags.append("no failure condition: no data element is marked critical")
    if not depm.round_body:
        diags.append("empty round body: at least one element is required")
    for i, e in enumerate(depm.round_body):
        if e.id != i:
            diags.append(f"element {e.name}: id {e.id} is not dense (expected {i})")
        for kind, ids in (("reads", e.reads), ("writes", e.writes)):
            for d in sorted(ids):
                if not 0 <= d < nd:
                    diags.append(f"element {e.name}: {kind} unknown data element {d}")
        if not (0.0 <= e.fault_prob <= 1.0) or math.isnan(e.fault_prob):
            diags.append(f"element {e.name}: fault probability {e.fault_prob} outside [0,1]")
    _duplicates(diags, "element", [e.name for e in depm.round_body])
    seen = set()
    for b, mechs in family.annotations:
        if not 0 <= b < len(depm.round_body):
            diags.append(f"annotation references unknown block {b}")
            continue
        name = depm.round_body[b].name
        if b in seen:
            diags.append(f"block {name}: annotated more than once")
        seen.add(b)
        if not 1 <= len(mechs) <= 4:
            diags.append(f"block {name}: allowed set must hold 1 to 4 mechanisms")
        if len(set(mechs)) != len(mechs):
            diags.append(f"block {name}: duplicate mechanisms in allowed set")
        if Mechanism.NONE not in mechs:
            diags.append(f"block {name}: allowed set must contain none")
    if list(family.annotated) != sorted(family.annotated):
        diags.append("annotations are not sorted by block id")
    if family.spare_count < 0:
        diags.append(f"spare count {family.spare_count} is negative")
    if not 0.0 <= family.coverage <= 1.0:
        diags.append(f"detection coverage {family.coverage} outside [0,1]")
    for g, d in depm.resets:
        if not 0 <= g <= len(depm.round_body) or not 0 <= d < nd:
            diags.append(f"reset point ({g}, {d}) out of range")
    return diags


def _duplicates(diags: list[str], kind: str, names: Sequence[str]) -> None:
    seen = set()
    for n in names:
        if n in seen:
            diags.append(f"duplicate {kind} name {n}")
        seen.add(n)


# ---------------------------------------------------------------------------
# DSL


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<punct>[{},;=])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ModelError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        return ModelError(msg, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            shown = t.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}", t)
        return t

    def name(self) -> _Tok:
        t = self.next()
        if t.kind != "name":
            raise self.error(f"expected identifier, found {t.text or 'end of input'!r}", t)
        return t

    def number(self) -> tuple[float, _Tok]:
        t = self.next()
        if t.kind != "num":
            raise self.error(f"expected number, found {t.text or 'end of input'!r}", t)
        return float(t.text), t

    def name_set(self) -> list[_Tok]:
        self.expect("{")
        out = []
        if self.peek().text == "}":
            self.next()
            return out
        while True:
            out.append(self.name())
            t = self.next()
            if t.text == "}":
                return out
            if t.text != ",":
                raise self.error(f"expected ',' or '}}', found {t.text!r}", t)


def parse_model(text: str, check: bool = True) -> FamilyModel:
    """Parse a model document.

    With ``check`` the result is validated and a :class:`ModelError` lists
    every diagnostic.  Syntax errors and unresolved names always raise.
    """
    p = _Parser(text)
    data: list[DataElement] = []
    data_ids: dict[str, int] = {}
    elements: list[Element] = []
    elem_ids: dict[str, int] = {}
    annotations: dict[int, tuple[Mechanism, ...]] = {}
    sparing: dict[str, object] = {}
    while p.peek().kind != "eof":
        kw = p.name()
        if kw.text == "data":
            nt = p.name()
            critical = False
            if p.peek().text == "critical":
                p.next()
                critical = True
            if nt.text in data_ids:
                raise p.error(f"duplicate data element name {nt.text}", nt)
            data_ids[nt.text] = len(data)
            data.append(DataElement(len(data), nt.text, critical))
        elif kw.text == "element":
            nt = p.name()
            if nt.text in elem_ids:
                raise p.error(f"duplicate element name {nt.text}", nt)
            sets = {}
            for part in ("reads", "writes"):
                t = p.name()
                if t.text != part:
                    raise p.error(f"expected {part!r}, found {t.text!r}", t)
                ids = set()
                for ref in p.name_set():
                    if ref.text not in data_ids:
                        raise p.error(f"undeclared data element {ref.text}", ref)
                    ids.add(data_ids[ref.text])
                sets[part] = frozenset(ids)
            t = p.name()
            if t.text != "p":
                raise p.error(f"expected 'p', found {t.text!r}", t)
            p.expect("=")
            prob, pt = p.number()
            if not 0.0 <= prob <= 1.0:
                raise p.error(f"fault probability {prob} outside [0,1]", pt)
            elem_ids[nt.text] = len(elements)
            elements.append(Element(len(elements), nt.text, sets["reads"], sets["writes"], prob))
        elif kw.text == "protect":
            nt = p.name()
            if nt.text not in elem_ids:
                raise p.error(f"protect references unknown element {nt.text}", nt)
            t = p.name()
            if t.text != "with":
                raise p.error(f"expected 'with', found {t.text!r}", t)
            mechs = []
            for mt in p.name_set():
                try:
                    m = Mechanism(mt.text)
                except ValueError:
                    raise p.error(f"unknown mechanism {mt.text}", mt) from None
                if m in mechs:
                    raise p.error(f"duplicate mechanism {mt.text}", mt)
                mechs.append(m)
            b = elem_ids[nt.text]
            if b in annotations:
                raise p.error(f"element {nt.text} is protected twice", nt)
            annotations[b] = tuple(mechs)
        elif kw.text == "sparing":
            while p.peek().text != ";":
                key = p.name()
                p.expect("=")
                if key.text == "mode":
                    mt = p.name()
                    try:
                        sparing["mode"] = SparingMode(mt.text)
                    except ValueError:
                        raise p.error(f"unknown sparing mode {mt.text}", mt) from None
                elif key.text in ("spares", "coverage"):
                    val, vt = p.number()
                    if key.text == "spares":
                        if val != int(val) or val < 0:
                            raise p.error("spares must be a non-negative integer", vt)
                        val = int(val)
                    elif not 0.0 <= val <= 1.0:
                        raise p.error(f"coverage {val} outside [0,1]", vt)
                    sparing[key.text] = val
                else:
                    raise p.error(f"unknown sparing parameter {key.text}", key)
        else:
            raise p.error(f"unknown statement {kw.text!r}", kw)
        p.expect(";")

    family = FamilyModel(
        depm=Depm(tuple(data), tuple(elements)),
        annotations=tuple(sorted(annotations.items())),
        spare_count=sparing.get("spares", 2),
        coverage=sparing.get("coverage", 1.0),
        sparing_mode=sparing.get("mode", SparingMode.TAKEOVER_AFTER),
    )
    if check:
        diags = validate(family)
        if diags:
            raise ModelError("; ".join(diags))
    return family


def format_model(family: FamilyModel) -> str:
    """Print a model in the DSL; ``parse_model(format_model(f)) == f``."""
    depm = family.depm
    names = [d.name for d in depm.data]
    lines = []
    for d in depm.data:
        lines.append(f"data {d.name}{' critical' if d.critical else ''};")
    for e in depm.round_body:
        reads = ",".join(names[i] for i in sorted(e.reads))
        writes = ",".join(names[i] for i in sorted(e.writes))
        lines.append(f"element {e.name} reads{{{reads}}} writes{{{writes}}} p={e.fault_prob!r};")
    for b, mechs in family.annotations:
        lines.append(f"protect {depm.round_body[b].name} with {{{','.join(m.value for m in mechs)}}};")
    lines.append(
        f"sparing spares={family.spare_count} coverage={family.coverage!r} "
        f"mode={family.sparing_mode.value};")
    return "\n".join(lines) + "\n"


def load_model(path, check: bool = True) -> FamilyModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read(), check=check)


# ---------------------------------------------------------------------------
# reset-value optimization


def _dead_gaps(depm: Depm, d: int) -> list[bool]:
    """``dead[g]``: along the cyclic continuation from gap ``g`` datum ``d``
    is written before it is read.  The failure check reads critical data."""
    m = len(depm.round_body)
    critical = depm.data[d].critical
    # event following each gap: gap g>=1 precedes element g (or the check
    # when g == m); gap 0 precedes element 0.
    events: list[str | None] = []
    for e in depm.round_body:
        if d in e.reads:
            events.append("r")
        elif d in e.writes:
            events.append("w")
        else:
            events.append(None)
    check_event = "r" if critical else None
    # cyclic item sequence starting at gap 0: el0, el1, ..., el(m-1), check
    items = events + [check_event]
    n = len(items)
    dead = []
    for g in range(m + 1):
        start = g  # items[g] is the first item after gap g
        verdict = False
        for k in range(n):
            ev = items[(start + k) % n]
            if ev is not None:
                verdict = ev == "w"
                break
        dead.append(verdict)
    return dead


def reset_value_optimization(depm: Depm) -> Depm:
    """Insert error-flag resets where a datum is dead until its next write.

    A reset goes to the first gap of every maximal dead window; windows are
    split by writes of the datum.
    """
    m = len(depm.round_body)
    resets = set(depm.resets)
    for d in range(len(depm.data)):
        if not any(d in e.writes for e in depm.round_body):
            continue  # never written, flag stays clear
        dead = _dead_gaps(depm, d)
        for g in range(m + 1):
            if not dead[g]:
                continue
            if g == 0:
                prev, between_writes = m, False  # the check never writes
            else:
                prev = g - 1
                between_writes = d in depm.round_body[g - 1].writes
            if dead[prev] and not between_writes:
                continue
            resets.add((g, d))
    return replace(depm, resets=tuple(sorted(resets)))
