"""Reduced ordered multi-terminal binary decision diagrams.

Nodes are integers indexing flat arrays owned by a :class:`Manager`.
Terminals carry 64-bit floats and are hash-consed by exact value, inner
nodes by ``(var, lo, hi)``.  Each variable has its own unique table so that
adjacent levels can be swapped in place, which keeps node identities (and
therefore every live :class:`Mtbdd` handle) valid across reordering.

Garbage collection is mark-and-sweep from the live handles plus explicitly
registered roots.  It only runs at the boundary of public operations, never
inside a recursion.

References: Bryant 1986 (ROBDDs); Bahar et al. 1993 (ADDs / MTBDD matrix
multiplication); Rudell 1993 (sifting).
"""
from __future__ import annotations

import logging
import math
import time
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Sequence

logger = logging.getLogger(__name__)

TERM = -1
_TERM_LEVEL = 1 << 40

ADD, MUL, MIN, MAX, SUB = range(5)
_OPS: dict[str, int] = {"+": ADD, "*": MUL, "min": MIN, "max": MAX, "-": SUB}
_FUNCS = {
    ADD: lambda a, b: a + b,
    MUL: lambda a, b: a * b,
    MIN: min,
    MAX: max,
    SUB: lambda a, b: a - b,
}
_COMMUTATIVE = {ADD, MUL, MIN, MAX}


class MtbddError(Exception):
    pass


class NodeBudgetExceeded(MtbddError):
    """Raised when a manager grows beyond its node budget."""


@dataclass
class ReorderReport:
    nodes_before: int
    nodes_after: int
    swaps: int
    seconds: float
    order: list[str]


class Manager:
    """Owner of all nodes, variables and caches.

    A manager and its diagrams are single-owner; do not share one across
    threads.
    """

    def __init__(self, cache_size: int = 1 << 20, gc_threshold: int = 1 << 20,
                 node_budget: int | None = None):
        self._var: list[int] = []
        self._lo: list[int] = []
        self._hi: list[int] = []
        self._ref: list[int] = []  # number of live parents
        self._val: dict[int, float] = {}
        self._terminals: dict[float, int] = {}
        self._unique: list[dict[tuple[int, int], int]] = []
        self._level: dict[int, int] = {TERM: _TERM_LEVEL}
        self._order: list[int] = []
        self._names: list[str] = []
        self._by_name: dict[str, int] = {}
        self._free: list[int] = []
        self._live = 0
        self._cache: dict[tuple, int] = {}
        self.cache_size = cache_size
        self.gc_threshold = gc_threshold
        self.node_budget = node_budget
        self._handles: Counter = Counter()  # node -> live Mtbdd handles
        self._roots: Counter = Counter()
        self.gc_runs = 0
        self.peak_nodes = 0
        self.zero_node = self._terminal(0.0)
        self.one_node = self._terminal(1.0)
        self._ref[self.zero_node] += 1
        self._ref[self.one_node] += 1

    # ------------------------------------------------------------------
    # variables

    def add_var(self, name: str, level: int | None = None) -> int:
        """Declare a variable; it is placed at the bottom unless ``level``."""
        if name in self._by_name:
            raise MtbddError(f"variable {name!r} already declared")
        v = len(self._names)
        self._names.append(name)
        self._by_name[name] = v
        self._unique.append({})
        if level is None or level >= len(self._order):
            level = len(self._order)
            self._order.append(v)
        else:
            if any(self._unique[u] for u in self._order[level:]):
                raise MtbddError("can only insert variables above unused levels")
            self._order.insert(level, v)
        for lvl, u in enumerate(self._order):
            self._level[u] = lvl
        return v

    def var_id(self, name: str) -> int:
        return self._by_name[name]

    def var_name(self, v: int) -> str:
        return self._names[v]

    def level_of(self, v: int) -> int:
        return self._level[v]

    @property
    def num_vars(self) -> int:
        return len(self._names)

    @property
    def order(self) -> list[str]:
        return [self._names[v] for v in self._order]

    def reorder_to(self, names: Sequence[str]) -> None:
        """Move variables into the given order by adjacent swaps."""
        target = [self._by_name[n] for n in names]
        if sorted(target) != sorted(self._order):
            raise MtbddError("reorder_to needs a permutation of all variables")
        self._begin_reorder()
        try:
            for pos, v in enumerate(target):
                cur = self._level[v]
                while cur > pos:
                    self._swap(cur - 1)
                    cur -= 1
        finally:
            self._end_reorder()

    # ------------------------------------------------------------------
    # node primitives

    def _alloc(self, v: int, lo: int, hi: int) -> int:
        if self._free:
            n = self._free.pop()
            self._var[n] = v
            self._lo[n] = lo
            self._hi[n] = hi
            self._ref[n] = 0
        else:
            n = len(self._var)
            self._var.append(v)
            self._lo.append(lo)
            self._hi.append(hi)
            self._ref.append(0)
        self._live += 1
        if self.node_budget is not None and self._live > self.node_budget:
            raise NodeBudgetExceeded(f"node budget {self.node_budget} exceeded")
        return n

    def _terminal(self, value: float) -> int:
        if value == 0.0:
            value = 0.0  # fold -0.0
        n = self._terminals.get(value)
        if n is None:
            if math.isnan(value) or math.isinf(value):
                raise MtbddError(f"terminal value {value} is not finite")
            n = self._alloc(TERM, TERM, TERM)
            self._val[n] = value
            self._terminals[value] = n
        return n

    def _mk(self, v: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        t = self._unique[v]
        key = (lo, hi)
        n = t.get(key)
        if n is None:
            n = self._alloc(v, lo, hi)
            t[key] = n
            self._ref[lo] += 1
            self._ref[hi] += 1
        return n

    def _cache_put(self, key: tuple, value: int) -> None:
        cache = self._cache
        if len(cache) >= self.cache_size:
            cache.clear()  # lossy replacement
        cache[key] = value

    # ------------------------------------------------------------------
    # handles and garbage collection

    def _wrap(self, node: int) -> "Mtbdd":
        h = Mtbdd(self, node)
        if self._live > self.peak_nodes:
            self.peak_nodes = self._live
        if self._live > self.gc_threshold:
            self.collect_garbage()
            self.gc_threshold = max(self.gc_threshold, 2 * self._live)
        return h

    def register(self, f: "Mtbdd") -> None:
        """Pin ``f`` as an external root independent of handle lifetime."""
        self._roots[f.node] += 1

    def unregister(self, f: "Mtbdd") -> None:
        self._roots[f.node] -= 1
        if self._roots[f.node] <= 0:
            del self._roots[f.node]

    def _root_nodes(self) -> list[int]:
        roots = list(self._handles)
        roots.extend(self._roots)
        roots.extend((self.zero_node, self.one_node))
        return roots

    def collect_garbage(self) -> int:
        """Mark-and-sweep; returns the number of freed nodes."""
        var, lo, hi = self._var, self._lo, self._hi
        marked = bytearray(len(var))
        stack = self._root_nodes()
        while stack:
            n = stack.pop()
            if marked[n]:
                continue
            marked[n] = 1
            if var[n] != TERM:
                stack.append(lo[n])
                stack.append(hi[n])
        freed = 0
        for v, table in enumerate(self._unique):
            dead = [k for k, n in table.items() if not marked[n]]
            for k in dead:
                n = table.pop(k)
                self._release(n)
                freed += 1
        for value, n in list(self._terminals.items()):
            if not marked[n]:
                del self._terminals[value]
                del self._val[n]
                self._release(n)
                freed += 1
        self._recount_refs()
        self._cache.clear()
        self.gc_runs += 1
        logger.debug("gc freed %d nodes, %d live", freed, self._live)
        return freed

    def _release(self, n: int) -> None:
        self._var[n] = None  # type: ignore[call-overload]
        self._free.append(n)
        self._live -= 1

    def _recount_refs(self) -> None:
        ref = self._ref
        for i in range(len(ref)):
            ref[i] = 0
        lo, hi = self._lo, self._hi
        for table in self._unique:
            for n in table.values():
                ref[lo[n]] += 1
                ref[hi[n]] += 1
        ref[self.zero_node] += 1
        ref[self.one_node] += 1

    @property
    def live_nodes(self) -> int:
        return self._live

    def clear_cache(self) -> None:
        self._cache.clear()

    # ------------------------------------------------------------------
    # construction

    def constant(self, value: float) -> "Mtbdd":
        value = float(value)
        if not math.isfinite(value):
            raise MtbddError(f"terminal value {value} is not finite")
        return self._wrap(self._terminal(value))

    mk_terminal = constant

    @property
    def zero(self) -> "Mtbdd":
        return Mtbdd(self, self.zero_node)

    @property
    def one(self) -> "Mtbdd":
        return Mtbdd(self, self.one_node)

    def _var_of(self, v: int | str) -> int:
        if isinstance(v, str):
            return self._by_name[v]
        if not 0 <= v < len(self._names):
            raise MtbddError(f"unknown variable {v}")
        return v

    def indicator(self, v: int | str, positive: bool = True) -> "Mtbdd":
        v = self._var_of(v)
        if positive:
            return self._wrap(self._mk(v, self.zero_node, self.one_node))
        return self._wrap(self._mk(v, self.one_node, self.zero_node))

    def _cube(self, assignment: Mapping[int, int], value: int | None = None) -> int:
        node = self.one_node if value is None else value
        zero = self.zero_node
        for v in sorted(assignment, key=self._level.__getitem__, reverse=True):
            node = self._mk(v, node, zero) if not assignment[v] else self._mk(v, zero, node)
        return node

    def cube(self, assignment: Mapping[int | str, int], value: float = 1.0) -> "Mtbdd":
        """Function equal to ``value`` on the given partial assignment, else 0."""
        a = {self._var_of(v): int(b) for v, b in assignment.items()}
        return self._wrap(self._cube(a, self._terminal(float(value))))

    def from_function(self, variables: Sequence[int | str],
                      fn: Callable[[tuple[int, ...]], float]) -> "Mtbdd":
        """Build the diagram of ``fn`` over all assignments of ``variables``."""
        vs = [self._var_of(v) for v in variables]
        order = sorted(range(len(vs)), key=lambda i: self._level[vs[i]])
        bits = [0] * len(vs)

        def rec(k: int) -> int:
            if k == len(order):
                return self._terminal(float(fn(tuple(bits))))
            i = order[k]
            bits[i] = 0
            lo = rec(k + 1)
            bits[i] = 1
            hi = rec(k + 1)
            return self._mk(vs[i], lo, hi)

        return self._wrap(rec(0))

    # ------------------------------------------------------------------
    # apply

    def _check(self, f: "Mtbdd") -> int:
        if f.manager is not self:
            raise MtbddError("diagram belongs to a different manager")
        return f.node

    def apply(self, op: str, f: "Mtbdd", g: "Mtbdd") -> "Mtbdd":
        """Pointwise ``op`` in ``{'+', '*', 'min', 'max', '-'}``."""
        try:
            code = _OPS[op]
        except KeyError:
            raise MtbddError(f"unknown operator {op!r}") from None
        return self._wrap(self._apply(code, self._check(f), self._check(g)))

    def _apply(self, op: int, f: int, g: int) -> int:
        var = self._var
        vf = var[f]
        vg = var[g]
        if vf == TERM and vg == TERM:
            return self._terminal(_FUNCS[op](self._val[f], self._val[g]))
        zero = self.zero_node
        if op == ADD:
            if f == zero:
                return g
            if g == zero:
                return f
        elif op == MUL:
            if f == zero or g == zero:
                return zero
            one = self.one_node
            if f == one:
                return g
            if g == one:
                return f
        elif op == SUB:
            if g == zero:
                return f
            if f == g:
                return zero
        elif f == g:  # min, max
            return f
        if op in _COMMUTATIVE and f > g:
            f, g = g, f
            vf, vg = vg, vf
        key = (op, f, g)
        r = self._cache.get(key)
        if r is not None:
            return r
        level = self._level
        lf = level[vf]
        lg = level[vg]
        lo, hi = self._lo, self._hi
        if lf < lg:
            r = self._mk(vf, self._apply(op, lo[f], g), self._apply(op, hi[f], g))
        elif lg < lf:
            r = self._mk(vg, self._apply(op, f, lo[g]), self._apply(op, f, hi[g]))
        else:
            r = self._mk(vf, self._apply(op, lo[f], lo[g]), self._apply(op, hi[f], hi[g]))
        self._cache_put(key, r)
        return r

    def _map(self, f: int, fn: Callable[[float], float], key: Hashable) -> int:
        cache: dict[int, int] = {}
        var, lo, hi, val = self._var, self._lo, self._hi, self._val

        def rec(n: int) -> int:
            if var[n] == TERM:
                return self._terminal(float(fn(val[n])))
            r = cache.get(n)
            if r is None:
                r = self._mk(var[n], rec(lo[n]), rec(hi[n]))
                cache[n] = r
            return r

        return rec(f)

    def map_terminals(self, f: "Mtbdd", fn: Callable[[float], float]) -> "Mtbdd":
        return self._wrap(self._map(self._check(f), fn, fn))

    def threshold(self, f: "Mtbdd", bound: float, strict: bool = False,
                  above: bool = True) -> "Mtbdd":
        """0/1 indicator of ``f > bound`` (or ``>=``, ``<``, ``<=``)."""
        if above:
            fn = (lambda x: 1.0 if x > bound else 0.0) if strict else (lambda x: 1.0 if x >= bound else 0.0)
        else:
            fn = (lambda x: 1.0 if x < bound else 0.0) if strict else (lambda x: 1.0 if x <= bound else 0.0)
        return self.map_terminals(f, fn)

    def ite(self, c: "Mtbdd", t: "Mtbdd", e: "Mtbdd") -> "Mtbdd":
        """``c*t + (1-c)*e`` for a 0/1 valued ``c``."""
        cn, tn, en = self._check(c), self._check(t), self._check(e)
        notc = self._apply(SUB, self.one_node, cn)
        return self._wrap(self._apply(ADD, self._apply(MUL, cn, tn), self._apply(MUL, notc, en)))

    # ------------------------------------------------------------------
    # restriction, evaluation, inspection

    def _restrict(self, f: int, assignment: Mapping[int, int]) -> int:
        cache: dict[int, int] = {}
        var, lo, hi = self._var, self._lo, self._hi
        level = self._level
        deepest = max((level[v] for v in assignment), default=-1)

        def rec(n: int) -> int:
            v = var[n]
            if v == TERM or level[v] > deepest:
                return n
            r = cache.get(n)
            if r is not None:
                return r
            b = assignment.get(v)
            if b is None:
                r = self._mk(v, rec(lo[n]), rec(hi[n]))
            else:
                r = rec(hi[n] if b else lo[n])
            cache[n] = r
            return r

        return rec(f)

    def restrict(self, f: "Mtbdd", assignment: Mapping[int | str, int]) -> "Mtbdd":
        a = {self._var_of(v): int(b) for v, b in assignment.items()}
        return self._wrap(self._restrict(self._check(f), a))

    def evaluate(self, f: "Mtbdd", assignment: Mapping[int | str, int] | Callable[[int], int]) -> float:
        n = self._check(f)
        var, lo, hi = self._var, self._lo, self._hi
        if callable(assignment):
            get = assignment
        else:
            a = {self._var_of(v): int(b) for v, b in assignment.items()}
            get = a.__getitem__
        while var[n] != TERM:
            n = hi[n] if get(var[n]) else lo[n]
        return self._val[n]

    def _reachable(self, roots: Iterable[int]) -> set[int]:
        seen: set[int] = set()
        stack = list(roots)
        var, lo, hi = self._var, self._lo, self._hi
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            if var[n] != TERM:
                stack.append(lo[n])
                stack.append(hi[n])
        return seen

    def node_count(self, *fs: "Mtbdd") -> int:
        """Distinct nodes (terminals included) reachable from ``fs``."""
        return len(self._reachable(self._check(f) for f in fs))

    def support(self, f: "Mtbdd") -> frozenset[int]:
        var = self._var
        return frozenset(var[n] for n in self._reachable([self._check(f)]) if var[n] != TERM)

    def terminal_values(self, f: "Mtbdd") -> list[float]:
        var, val = self._var, self._val
        return sorted(val[n] for n in self._reachable([self._check(f)]) if var[n] == TERM)

    def enumerate_terminals(self, f: "Mtbdd", variables: Sequence[int | str]) -> dict[tuple[int, ...], float]:
        """Value of ``f`` under every assignment of ``variables``.

        Keys are bit tuples in the order of ``variables``.
        """
        vs = [self._var_of(v) for v in variables]
        extra = self.support(f) - set(vs)
        if extra:
            names = sorted(self._names[v] for v in extra)
            raise MtbddError(f"support exceeds the enumerated variables: {names}")
        pos = sorted(range(len(vs)), key=lambda i: self._level[vs[i]])
        var, lo, hi, val = self._var, self._lo, self._hi, self._val
        out: dict[tuple[int, ...], float] = {}
        bits = [0] * len(vs)

        def rec(n: int, k: int) -> None:
            if k == len(pos):
                out[tuple(bits)] = val[n]
                return
            i = pos[k]
            v = vs[i]
            if var[n] == v:
                bits[i] = 0
                rec(lo[n], k + 1)
                bits[i] = 1
                rec(hi[n], k + 1)
            else:
                bits[i] = 0
                rec(n, k + 1)
                bits[i] = 1
                rec(n, k + 1)

        rec(self._check(f), 0)
        return out

    def dump(self, f: "Mtbdd") -> str:
        """Plain-text node list, children before parents, ids renumbered."""
        var, lo, hi, val = self._var, self._lo, self._hi, self._val
        ids: dict[int, int] = {}
        lines: list[str] = []

        def rec(n: int) -> int:
            if n in ids:
                return ids[n]
            if var[n] == TERM:
                ids[n] = len(ids)
                lines.append(f"terminal {ids[n]} value={val[n]!r}")
            else:
                a = rec(lo[n])
                b = rec(hi[n])
                ids[n] = len(ids)
                lines.append(f"node {ids[n]} var={self._names[var[n]]} lo={a} hi={b}")
            return ids[n]

        rec(self._check(f))
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------------
    # abstraction and matrix products

    def _levels_counter(self, vs: Iterable[int]) -> Callable[[int], int]:
        """Returns ``ge(L)``: number of variables in ``vs`` at level >= L."""
        levels = sorted(self._level[v] for v in vs)
        total = len(levels)
        return lambda L: total - bisect_left(levels, L)

    def _scale_pow2(self, n: int, k: int) -> int:
        if k == 0 or n == self.zero_node:
            return n
        return self._apply(MUL, n, self._terminal(float(2 ** k)))

    def _sum_abstract(self, f: int, vs: Iterable[int]) -> int:
        zset = set(vs)
        ge = self._levels_counter(zset)
        cache: dict[int, int] = {}
        var, lo, hi, level = self._var, self._lo, self._hi, self._level

        def rec(n: int) -> int:
            v = var[n]
            if v == TERM:
                return n
            r = cache.get(n)
            if r is not None:
                return r
            L = level[v]
            gt = ge(L + 1)
            c0, c1 = lo[n], hi[n]
            r0 = self._scale_pow2(rec(c0), gt - ge(level[var[c0]]))
            r1 = self._scale_pow2(rec(c1), gt - ge(level[var[c1]]))
            if v in zset:
                r = self._apply(ADD, r0, r1)
            else:
                r = self._mk(v, r0, r1)
            cache[n] = r
            return r

        return self._scale_pow2(rec(f), ge(0) - ge(level[var[f]]))

    def sum_abstract(self, f: "Mtbdd", variables: Iterable[int | str]) -> "Mtbdd":
        """Sum of ``f`` over all assignments of ``variables``."""
        vs = [self._var_of(v) for v in variables]
        return self._wrap(self._sum_abstract(self._check(f), vs))

    def _max_abstract(self, f: int, vs: Iterable[int]) -> int:
        zset = set(vs)
        cache: dict[int, int] = {}
        var, lo, hi = self._var, self._lo, self._hi

        def rec(n: int) -> int:
            v = var[n]
            if v == TERM:
                return n
            r = cache.get(n)
            if r is None:
                a, b = rec(lo[n]), rec(hi[n])
                r = self._apply(MAX, a, b) if v in zset else self._mk(v, a, b)
                cache[n] = r
            return r

        return rec(f)

    def max_abstract(self, f: "Mtbdd", variables: Iterable[int | str]) -> "Mtbdd":
        vs = [self._var_of(v) for v in variables]
        return self._wrap(self._max_abstract(self._check(f), vs))

    def _matmul(self, a: int, b: int, zs: Iterable[int],
                relabel: Mapping[int, int] | None = None) -> int:
        """``sum_z a*b`` over the summation variables ``zs``.

        ``relabel`` renames result variables on the fly; the caller guarantees
        that this keeps the variable order.
        """
        zset = set(zs)
        order = self._order
        nv = len(order)
        # gel[L]: summation variables at level >= L (terminals sit at nv)
        gel = [0] * (nv + 1)
        for L in range(nv - 1, -1, -1):
            gel[L] = gel[L + 1] + (1 if order[L] in zset else 0)
        cache: dict[tuple[int, int], int] = {}
        var, lo, hi, val, level = self._var, self._lo, self._hi, self._val, self._level
        zero = self.zero_node
        apply = self._apply
        mk = self._mk
        terminal = self._terminal
        scale = self._scale_pow2
        ren = relabel or {}

        def top(x: int, y: int) -> int:
            vx, vy = var[x], var[y]
            lx = nv if vx == TERM else level[vx]
            ly = nv if vy == TERM else level[vy]
            return lx if lx < ly else ly

        def rec(x: int, y: int) -> int:
            if x == zero or y == zero:
                return zero
            vx = var[x]
            vy = var[y]
            if vx == TERM:
                if vy == TERM:
                    return terminal(val[x] * val[y])
                lx = nv
            else:
                lx = level[vx]
            ly = nv if vy == TERM else level[vy]
            key = (x, y)
            r = cache.get(key)
            if r is not None:
                return r
            if lx < ly:
                L = lx
                x0, x1 = lo[x], hi[x]
                y0 = y1 = y
            elif ly < lx:
                L = ly
                x0 = x1 = x
                y0, y1 = lo[y], hi[y]
            else:
                L = lx
                x0, x1 = lo[x], hi[x]
                y0, y1 = lo[y], hi[y]
            g = gel[L + 1]
            r0 = rec(x0, y0)
            if r0 != zero:
                k = g - gel[top(x0, y0)]
                if k:
                    r0 = scale(r0, k)
            r1 = rec(x1, y1)
            if r1 != zero:
                k = g - gel[top(x1, y1)]
                if k:
                    r1 = scale(r1, k)
            v = order[L]
            if v in zset:
                r = apply(ADD, r0, r1)
            else:
                r = mk(ren.get(v, v), r0, r1)
            cache[key] = r
            return r

        r = rec(a, b)
        return scale(r, gel[0] - gel[top(a, b)])

    def _relabel_keeps_order(self, mapping: Mapping[int, int], absent: set[int]) -> bool:
        """True if renaming ``mapping`` cannot reorder a result whose support
        avoids ``absent``: every variable strictly between source and target
        must be absent."""
        level, order = self._level, self._order
        for a, b in mapping.items():
            if b not in absent:
                return False
            la, lb = level[a], level[b]
            lo_, hi_ = (lb, la) if lb < la else (la, lb)
            if any(order[L] not in absent for L in range(lo_ + 1, hi_)):
                return False
        return True

    def matrix_multiply(self, a: "Mtbdd", b: "Mtbdd", rows: Sequence[int | str],
                        cols: Sequence[int | str], sums: Sequence[int | str]) -> "Mtbdd":
        """``C[r,c] = sum_s A[r,s] * B[s,c]``.

        ``a`` ranges over row and summation variables, ``b`` over summation
        and column variables.  Any other variable (a family parameter) is
        carried through pointwise.
        """
        rs = {self._var_of(v) for v in rows}
        cs = {self._var_of(v) for v in cols}
        ss = [self._var_of(v) for v in sums]
        if rs & cs or rs & set(ss) or cs & set(ss):
            raise MtbddError("row, column and summation variables must be disjoint")
        an, bn = self._check(a), self._check(b)
        if self.support(a) & cs:
            raise MtbddError("left operand depends on column variables")
        if self.support(b) & rs:
            raise MtbddError("right operand depends on row variables")
        return self._wrap(self._matmul(an, bn, ss))

    def multiply_abstract(self, f: "Mtbdd", g: "Mtbdd", variables: Iterable[int | str],
                          rename: Mapping[int | str, int | str] | None = None,
                          vacant: Iterable[int | str] = ()) -> "Mtbdd":
        """``sum_vars f*g`` without building the product first, optionally
        renaming the result.

        ``vacant`` lists variables known to be absent from both operands; it
        lets the renaming happen inside the product instead of in a second
        pass.
        """
        vs = [self._var_of(v) for v in variables]
        fn, gn = self._check(f), self._check(g)
        if not rename:
            return self._wrap(self._matmul(fn, gn, vs))
        mapping = {self._var_of(a): self._var_of(b) for a, b in rename.items()}
        absent = set(vs) | {self._var_of(v) for v in vacant}
        if self._relabel_keeps_order(mapping, absent):
            return self._wrap(self._matmul(fn, gn, vs, mapping))
        return self._wrap(self._rename(self._matmul(fn, gn, vs), mapping))

    def _rename(self, f: int, mapping: Mapping[int, int]) -> int:
        if not mapping:
            return f
        level = self._level
        var, lo, hi = self._var, self._lo, self._hi
        supp = sorted({var[n] for n in self._reachable([f]) if var[n] != TERM}, key=level.__getitem__)
        targets = [mapping.get(v, v) for v in supp]
        if len(set(targets)) != len(targets):
            raise MtbddError("rename would merge variables of the support")
        monotone = all(level[a] < level[b] for a, b in zip(targets, targets[1:]))
        cache: dict[int, int] = {}
        one, zero = self.one_node, self.zero_node

        def rec(n: int) -> int:
            v = var[n]
            if v == TERM:
                return n
            r = cache.get(n)
            if r is not None:
                return r
            w = mapping.get(v, v)
            r0, r1 = rec(lo[n]), rec(hi[n])
            if monotone:
                r = self._mk(w, r0, r1)
            else:
                pos = self._mk(w, zero, one)
                neg = self._mk(w, one, zero)
                r = self._apply(ADD, self._apply(MUL, pos, r1), self._apply(MUL, neg, r0))
            cache[n] = r
            return r

        return rec(f)

    def rename(self, f: "Mtbdd", mapping: Mapping[int | str, int | str]) -> "Mtbdd":
        m = {self._var_of(a): self._var_of(b) for a, b in mapping.items()}
        return self._wrap(self._rename(self._check(f), m))

    def vector_matrix(self, v: "Mtbdd", a: "Mtbdd", rows: Sequence[int | str],
                      cols: Sequence[int | str], vacant: Iterable[int | str] = ()) -> "Mtbdd":
        """Row vector times matrix; the result is expressed over ``rows``.

        ``vacant`` is as for :meth:`multiply_abstract`.
        """
        rs = [self._var_of(x) for x in rows]
        cs = [self._var_of(x) for x in cols]
        if len(rs) != len(cs):
            raise MtbddError("row and column variable lists differ in length")
        if set(rs) & set(cs):
            raise MtbddError("row and column variables overlap")
        vn, an = self._check(v), self._check(a)
        if not vacant and self.support(v) & set(cs):
            raise MtbddError("vector depends on column variables")
        mapping = dict(zip(cs, rs))
        absent = set(rs) | {self._var_of(x) for x in vacant}
        if vacant and self._relabel_keeps_order(mapping, absent):
            return self._wrap(self._matmul(vn, an, rs, mapping))
        return self._wrap(self._rename(self._matmul(vn, an, rs), mapping))

    # ------------------------------------------------------------------
    # reordering

    def _begin_reorder(self) -> None:
        self.collect_garbage()
        for n in self._root_nodes():
            self._ref[n] += 1
        self._reorder_roots = self._root_nodes()

    def _end_reorder(self) -> None:
        for n in self._reorder_roots:
            self._ref[n] -= 1
        del self._reorder_roots
        self._cache.clear()

    def _deref(self, n: int) -> None:
        ref, var, lo, hi = self._ref, self._var, self._lo, self._hi
        stack = [n]
        while stack:
            n = stack.pop()
            ref[n] -= 1
            if ref[n] > 0:
                continue
            v = var[n]
            if v == TERM:
                del self._terminals[self._val.pop(n)]
                self._release(n)
                continue
            del self._unique[v][(lo[n], hi[n])]
            stack.append(lo[n])
            stack.append(hi[n])
            self._release(n)

    def _mk_ref(self, v: int, lo: int, hi: int) -> int:
        if lo == hi:
            self._ref[lo] += 1
            return lo
        n = self._mk(v, lo, hi)
        self._ref[n] += 1
        return n

    def _swap(self, i: int) -> None:
        """Exchange the variables at levels ``i`` and ``i + 1`` in place."""
        order = self._order
        x, y = order[i], order[i + 1]
        ux, uy = self._unique[x], self._unique[y]
        var, lo, hi = self._var, self._lo, self._hi
        moving = [(k, n) for k, n in ux.items() if var[k[0]] == y or var[k[1]] == y]
        for k, _ in moving:
            del ux[k]
        for (f0, f1), u in moving:
            if var[f0] == y:
                f00, f01 = lo[f0], hi[f0]
            else:
                f00 = f01 = f0
            if var[f1] == y:
                f10, f11 = lo[f1], hi[f1]
            else:
                f10 = f11 = f1
            n0 = self._mk_ref(x, f00, f10)
            n1 = self._mk_ref(x, f01, f11)
            var[u] = y
            lo[u] = n0
            hi[u] = n1
            uy[(n0, n1)] = u
            self._deref(f0)
            self._deref(f1)
        order[i], order[i + 1] = y, x
        self._level[x] = i + 1
        self._level[y] = i

    def swap_levels(self, i: int) -> None:
        self._begin_reorder()
        try:
            self._swap(i)
        finally:
            self._end_reorder()

    def sift_reorder(self, max_growth: float = 2.0,
                     variables: Sequence[int | str] | None = None) -> ReorderReport:
        """Rudell sifting: move each variable through all levels and keep it
        at the position with the fewest live nodes."""
        t0 = time.perf_counter()
        self._begin_reorder()
        before = self._live
        swaps = 0
        try:
            nlev = len(self._order)
            if variables is None:
                cands = list(self._order)
            else:
                cands = [self._var_of(v) for v in variables]
            cands.sort(key=lambda v: -len(self._unique[v]))
            for v in cands:
                best = self._live
                start = self._level[v]
                best_pos = start
                pos = start
                limit = max_growth * best

                def move(to: int) -> None:
                    nonlocal pos, best, best_pos, swaps
                    step = 1 if to > pos else -1
                    while pos != to:
                        self._swap(pos if step > 0 else pos - 1)
                        swaps += 1
                        pos += step
                        if self._live < best:
                            best, best_pos = self._live, pos
                        if self._live > limit:
                            return

                if start > (nlev - 1) // 2:
                    move(nlev - 1)
                    move(0)
                else:
                    move(0)
                    move(nlev - 1)
                move(best_pos)
                while pos != best_pos:  # growth limit hit on the way back
                    move(best_pos)
        finally:
            self._end_reorder()
        after = self._live
        report = ReorderReport(before, after, swaps, time.perf_counter() - t0, self.order)
        logger.info("sifting: %d -> %d nodes, %d swaps", before, after, swaps)
        return report


class Mtbdd:
    """Handle on a diagram root; keeps the root alive for the collector."""

    __slots__ = ("manager", "node")

    def __init__(self, manager: Manager, node: int):
        self.manager = manager
        self.node = node
        manager._handles[node] += 1

    def __del__(self):
        handles = self.manager._handles
        n = self.node
        c = handles[n] - 1
        if c > 0:
            handles[n] = c
        else:
            del handles[n]

    def _coerce(self, other) -> "Mtbdd":
        if isinstance(other, Mtbdd):
            return other
        return self.manager.constant(other)

    def __add__(self, other):
        return self.manager.apply("+", self, self._coerce(other))

    __radd__ = __add__

    def __mul__(self, other):
        return self.manager.apply("*", self, self._coerce(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return self.manager.apply("-", self, self._coerce(other))

    def __rsub__(self, other):
        return self.manager.apply("-", self._coerce(other), self)

    def min(self, other) -> "Mtbdd":
        return self.manager.apply("min", self, self._coerce(other))

    def max(self, other) -> "Mtbdd":
        return self.manager.apply("max", self, self._coerce(other))

    def __eq__(self, other) -> bool:
        return isinstance(other, Mtbdd) and other.manager is self.manager and other.node == self.node

    def __hash__(self) -> int:
        return hash((id(self.manager), self.node))

    def __repr__(self) -> str:
        if self.is_terminal:
            return f"Mtbdd(const {self.value!r})"
        return f"Mtbdd(node {self.node}, {self.node_count()} nodes)"

    @property
    def is_terminal(self) -> bool:
        return self.manager._var[self.node] == TERM

    @property
    def value(self) -> float:
        if not self.is_terminal:
            raise MtbddError("not a constant diagram")
        return self.manager._val[self.node]

    def restrict(self, assignment) -> "Mtbdd":
        return self.manager.restrict(self, assignment)

    def evaluate(self, assignment) -> float:
        return self.manager.evaluate(self, assignment)

    def node_count(self) -> int:
        return self.manager.node_count(self)

    @property
    def support(self) -> frozenset[int]:
        return self.manager.support(self)

    def sum_abstract(self, variables) -> "Mtbdd":
        return self.manager.sum_abstract(self, variables)

    def dump(self) -> str:
        return self.manager.dump(self)
