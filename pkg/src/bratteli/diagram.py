"""Generalized Bratteli diagrams on explicit integer windows.

A diagram is a sequence of sparse nonnegative-integer incidence matrices
F_0, F_1, ... where ``F_n[(v, w)]`` counts the edges between the source
vertex ``w`` on level n and the target vertex ``v`` on level n+1.  Levels
that are countably infinite in principle (integer- or natural-indexed) are
materialized on explicit windows; band rules declare how rows continue
outside the window so that truncation effects can be masked downstream.

Everything here is pure and immutable after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_PATH_CAP = 10**6


# ---------------------------------------------------------------- errors

class DiagramError(Exception):
    """Base class for structural diagram violations."""


class ZeroRow(DiagramError):
    def __init__(self, level: int, vertex: int):
        super().__init__(f"row of vertex {vertex} at level {level + 1} is empty")
        self.level = level
        self.vertex = vertex


class ZeroColumn(DiagramError):
    def __init__(self, level: int, vertex: int):
        super().__init__(f"column of vertex {vertex} at level {level} is empty")
        self.level = level
        self.vertex = vertex


class InfiniteRow(DiagramError):
    """Row support leaves the declared window and no band rule explains it."""

    def __init__(self, level: int, vertex: int, source: int):
        super().__init__(
            f"entry ({vertex}, {source}) at level {level} lies outside the "
            f"source window and the matrix declares no band rule")
        self.level = level
        self.vertex = vertex
        self.source = source


class WindowMismatch(DiagramError):
    pass


class CutsOutOfRange(DiagramError):
    pass


class TooManyPaths(DiagramError):
    def __init__(self, cap: int, count):
        super().__init__(f"cylinder enumeration would produce {count} paths "
                         f"(cap {cap})")
        self.cap = cap
        self.count = count


class LengthMismatch(DiagramError):
    pass


# ---------------------------------------------------------------- windows

@dataclass(frozen=True)
class Window:
    """Integer index window [lo, hi] restricted to multiples of ``step``.

    ``step`` > 1 models sublattices: a band rule with offsets (-2, 0, +2)
    lives on the even integers, so its natural window has step 2.
    """

    lo: int
    hi: int
    step: int = 1

    def __post_init__(self):
        if self.step < 1:
            raise WindowMismatch(f"window step must be >= 1, got {self.step}")
        if self.hi < self.lo:
            raise WindowMismatch(f"empty window [{self.lo}, {self.hi}]")

    @property
    def vertices(self) -> tuple[int, ...]:
        first = math.ceil(self.lo / self.step) * self.step
        return tuple(range(first, self.hi + 1, self.step))

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, idx: int) -> bool:
        return self.lo <= idx <= self.hi and idx % self.step == 0

    def position(self, idx: int) -> int:
        """Array position of a vertex index; raises KeyError when outside."""
        if idx not in self:
            raise KeyError(f"vertex {idx} not in window {self}")
        first = math.ceil(self.lo / self.step) * self.step
        return (idx - first) // self.step

    def __str__(self):  # pragma: no cover - cosmetic
        s = f"[{self.lo}, {self.hi}]"
        return s if self.step == 1 else s + f"/{self.step}"


def window_of(seq_or_window) -> Window:
    if isinstance(seq_or_window, Window):
        return seq_or_window
    lo, hi, *rest = seq_or_window
    return Window(int(lo), int(hi), int(rest[0]) if rest else 1)


# ---------------------------------------------------------------- matrices

@dataclass(frozen=True)
class IncidenceMatrix:
    """One level of incidence data: target rows over source columns.

    entries : {(target v in V_{n+1}, source w in V_n): multiplicity > 0}
    band    : optional ((offset, value), ...) declaration meaning that on the
              untruncated lattice row v has entry ``value`` at source
              ``v + offset``; used to mask truncation at window edges.

    For truncations of infinite matrices that are not pure band rules, the
    exterior_{rows,cols} sets list the vertices whose row/column lost
    entries to the window edge.  row_sum_claim / col_sum_claim assert that
    *untruncated* rows/columns all share that sum (e.g. a constant-length
    substitution), which windowed sums alone cannot reveal.
    """

    level: int
    entries: Mapping[tuple[int, int], int]
    row_window: Window
    col_window: Window
    band: tuple[tuple[int, int], ...] | None = None
    row_sum_claim: int | None = None
    col_sum_claim: int | None = None
    exterior_rows: frozenset | None = None
    exterior_cols: frozenset | None = None

    # -- shape helpers -------------------------------------------------
    @property
    def targets(self) -> tuple[int, ...]:
        return self.row_window.vertices

    @property
    def sources(self) -> tuple[int, ...]:
        return self.col_window.vertices

    def row_entries(self, v: int) -> list[tuple[int, int]]:
        return sorted((w, m) for (t, w), m in self.entries.items() if t == v)

    def col_entries(self, w: int) -> list[tuple[int, int]]:
        return sorted((v, m) for (v, s), m in self.entries.items() if s == w)

    def multiplicity(self, v: int, w: int) -> int:
        return self.entries.get((v, w), 0)

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros((len(self.row_window), len(self.col_window)), dtype=dtype)
        rw, cw = self.row_window, self.col_window
        for (v, w), m in self.entries.items():
            out[rw.position(v), cw.position(w)] = m
        return out

    # -- truncation masks ----------------------------------------------
    def interior_rows(self) -> np.ndarray:
        """True where the window row equals the untruncated row."""
        tv = self.targets
        if self.exterior_rows is not None:
            return np.array([v not in self.exterior_rows for v in tv])
        if self.band is None:
            return np.ones(len(tv), dtype=bool)
        offs = [o for o, _ in self.band]
        return np.array([all(v + o in self.col_window for o in offs)
                         for v in tv])

    def interior_cols(self) -> np.ndarray:
        """True where the window column receives every untruncated edge."""
        sv = self.sources
        if self.exterior_cols is not None:
            return np.array([w not in self.exterior_cols for w in sv])
        if self.band is None:
            return np.ones(len(sv), dtype=bool)
        offs = [o for o, _ in self.band]
        return np.array([all(w - o in self.row_window for o in offs)
                         for w in sv])

    def row_sums(self) -> np.ndarray:
        out = np.zeros(len(self.row_window), dtype=np.int64)
        for (v, _), m in self.entries.items():
            out[self.row_window.position(v)] += m
        return out

    def col_sums(self) -> np.ndarray:
        out = np.zeros(len(self.col_window), dtype=np.int64)
        for (_, w), m in self.entries.items():
            out[self.col_window.position(w)] += m
        return out


def incidence_from_dense(level: int, matrix, row_window=None,
                         col_window=None) -> IncidenceMatrix:
    arr = [list(row) for row in matrix]
    nrow, ncol = len(arr), len(arr[0])
    rw = window_of(row_window) if row_window is not None else Window(0, nrow - 1)
    cw = window_of(col_window) if col_window is not None else Window(0, ncol - 1)
    tv, sv = rw.vertices, cw.vertices
    if len(tv) != nrow or len(sv) != ncol:
        raise WindowMismatch(
            f"dense shape {nrow}x{ncol} does not match windows {rw} x {cw}")
    entries = {}
    for i, v in enumerate(tv):
        for j, w in enumerate(sv):
            m = arr[i][j]
            if m:
                entries[(v, w)] = int(m)
    return IncidenceMatrix(level, entries, rw, cw)


def band_matrix(level: int, window, offsets_values: Mapping[int, int],
                ) -> IncidenceMatrix:
    """Materialize a band rule on a window (same window for both levels).

    Sources that fall outside the window are truncated away; the band
    declaration is kept so that the resulting boundary rows can be masked.
    """
    win = window_of(window)
    band = tuple(sorted((int(o), int(v)) for o, v in offsets_values.items()))
    if not band or any(val <= 0 for _, val in band):
        raise WindowMismatch("band rule needs positive values")
    span = max(abs(o) for o, _ in band)
    if span and span % win.step != 0:
        raise WindowMismatch(
            f"band offsets {sorted(o for o, _ in band)} do not respect window "
            f"step {win.step}")
    if win.hi - win.lo < 2 * span:
        raise WindowMismatch(
            f"window {win} too small for band offsets spanning +-{span}")
    entries = {}
    for v in win.vertices:
        for o, val in band:
            w = v + o
            if w in win:
                entries[(v, w)] = entries.get((v, w), 0) + val
    total = sum(val for _, val in band)
    return IncidenceMatrix(level, entries, win, win, band=band,
                           row_sum_claim=total, col_sum_claim=total)


# ---------------------------------------------------------------- diagram

@dataclass(frozen=True)
class Diagram:
    """Validated sequence of incidence matrices, levels 0 .. depth."""

    matrices: tuple[IncidenceMatrix, ...]
    stationary: bool

    @property
    def depth(self) -> int:
        return len(self.matrices)

    def F(self, n: int) -> IncidenceMatrix:
        return self.matrices[n]

    def window(self, n: int) -> Window:
        if n < self.depth:
            return self.matrices[n].col_window
        return self.matrices[-1].row_window

    def vertices(self, n: int) -> tuple[int, ...]:
        return self.window(n).vertices


def _matrices_equal(a: IncidenceMatrix, b: IncidenceMatrix) -> bool:
    return (dict(a.entries) == dict(b.entries)
            and a.row_window == b.row_window
            and a.col_window == b.col_window)


def validate(matrices: Sequence[IncidenceMatrix]) -> Diagram:
    """Check the defining structural conditions and assemble a Diagram.

    Raises ZeroRow / ZeroColumn / InfiniteRow / WindowMismatch.  Row
    finiteness is automatic for sparse storage; emptiness is not.
    """
    if not matrices:
        raise WindowMismatch("a diagram needs at least one incidence matrix")
    mats = tuple(matrices)
    for k, m in enumerate(mats):
        if m.level != k:
            raise WindowMismatch(f"matrix {k} carries level tag {m.level}")
        if k > 0 and m.col_window != mats[k - 1].row_window:
            raise WindowMismatch(
                f"source window of level {k} ({m.col_window}) differs from the "
                f"target window of level {k - 1} ({mats[k - 1].row_window})")
        seen_rows: set[int] = set()
        seen_cols: set[int] = set()
        for (v, w), mult in m.entries.items():
            if mult <= 0 or int(mult) != mult:
                raise WindowMismatch(
                    f"entry ({v},{w}) at level {k} has multiplicity {mult!r}")
            if v not in m.row_window:
                raise WindowMismatch(
                    f"target {v} outside window {m.row_window} at level {k}")
            if w not in m.col_window:
                raise InfiniteRow(k, v, w)
            seen_rows.add(v)
            seen_cols.add(w)
        for v in m.targets:
            if v not in seen_rows:
                raise ZeroRow(k, v)
        for w in m.sources:
            if w not in seen_cols:
                raise ZeroColumn(k, w)
    stationary = all(_matrices_equal(mats[0], m) for m in mats[1:])
    return Diagram(mats, stationary)


def stationary_diagram(matrix, depth: int, window=None) -> Diagram:
    """Repeat one dense matrix (or band-built IncidenceMatrix) ``depth`` times."""
    if isinstance(matrix, IncidenceMatrix):
        proto = matrix
        mats = [IncidenceMatrix(k, proto.entries, proto.row_window,
                                proto.col_window, proto.band,
                                proto.row_sum_claim, proto.col_sum_claim,
                                proto.exterior_rows, proto.exterior_cols)
                for k in range(depth)]
        return validate(mats)
    proto = incidence_from_dense(0, matrix, window, window)
    mats = [IncidenceMatrix(k, proto.entries, proto.row_window,
                            proto.col_window)
            for k in range(depth)]
    return validate(mats)


def band_diagram(offsets_values: Mapping[int, int], depth: int,
                 window) -> Diagram:
    proto = band_matrix(0, window, offsets_values)
    return stationary_diagram(proto, depth)


# ---------------------------------------------------------------- telescoping

def _sparse_product(high: IncidenceMatrix, low: IncidenceMatrix,
                    level: int) -> IncidenceMatrix:
    """high @ low with exact integer arithmetic (high sits above low)."""
    if high.col_window != low.row_window:
        raise WindowMismatch("incompatible windows in telescoping product")
    by_target: dict[int, list[tuple[int, int]]] = {}
    for (u, w), m in low.entries.items():
        by_target.setdefault(u, []).append((w, m))
    out: dict[tuple[int, int], int] = {}
    for (v, u), m2 in high.entries.items():
        for w, m1 in by_target.get(u, ()):
            key = (v, w)
            out[key] = out.get(key, 0) + m2 * m1
    return IncidenceMatrix(level, out, high.row_window, low.col_window)


def _exterior_set(m: IncidenceMatrix, rows: bool) -> set:
    verts = m.targets if rows else m.sources
    mask = m.interior_rows() if rows else m.interior_cols()
    return {v for v, ok in zip(verts, mask) if not ok}


def telescope(d: Diagram, cuts: Sequence[int]) -> Diagram:
    """Collapse level blocks: F'_k = F_{n_{k+1}-1} ... F_{n_k}.

    The product is taken in descending level order so the height recursion
    survives telescoping: F'_k H^(n_k) = H^(n_{k+1}).  Truncation masks
    compose (a product row is interior only when every row it multiplies
    through is) and constant-sum claims multiply.
    """
    cuts = list(cuts)
    if (not cuts or cuts[0] != 0 or any(b <= a for a, b in zip(cuts, cuts[1:]))
            or cuts[-1] > d.depth):
        raise CutsOutOfRange(f"cuts {cuts} invalid for depth {d.depth}")
    if len(cuts) < 2:
        raise CutsOutOfRange("need at least two cut points")
    mats = []
    for k in range(len(cuts) - 1):
        lo_cut, hi_cut = cuts[k], cuts[k + 1]
        block = [d.F(n) for n in range(lo_cut, hi_cut)]
        prod = block[0]
        for f in block[1:]:
            prod = _sparse_product(f, prod, level=k)
        ext_r = _exterior_set(block[0], rows=True)
        for f in block[1:]:
            ext_r = (_exterior_set(f, rows=True)
                     | {v for (v, w) in f.entries if w in ext_r})
        ext_c = _exterior_set(block[-1], rows=False)
        for f in reversed(block[:-1]):
            ext_c = (_exterior_set(f, rows=False)
                     | {w for (v, w) in f.entries if v in ext_c})
        rclaims = [f.row_sum_claim for f in block]
        cclaims = [f.col_sum_claim for f in block]
        rsum = math.prod(rclaims) if all(c is not None for c in rclaims) else None
        csum = math.prod(cclaims) if all(c is not None for c in cclaims) else None
        mats.append(IncidenceMatrix(
            k, prod.entries, prod.row_window, prod.col_window,
            block[0].band if len(block) == 1 else None,
            rsum, csum,
            frozenset(ext_r) if ext_r else None,
            frozenset(ext_c) if ext_c else None))
    return validate(mats)


# ---------------------------------------------------------------- heights

def heights(d: Diagram, n: int) -> list[int]:
    """H^(n) = F_{n-1} ... F_0 1, exact integers aligned to vertices(n).

    H^(n)_v counts the paths from level 0 into v; Python integers make
    overflow a non-issue.
    """
    if n < 0 or n > d.depth:
        raise CutsOutOfRange(f"level {n} outside 0..{d.depth}")
    h = {w: 1 for w in d.vertices(0)}
    for k in range(n):
        m = d.F(k)
        nxt = {v: 0 for v in m.targets}
        for (v, w), mult in m.entries.items():
            nxt[v] += mult * h[w]
        h = nxt
    return [h[v] for v in d.vertices(n)]


def all_heights(d: Diagram) -> list[list[int]]:
    out = [[1] * len(d.vertices(0))]
    h = {w: 1 for w in d.vertices(0)}
    for k in range(d.depth):
        m = d.F(k)
        nxt = {v: 0 for v in m.targets}
        for (v, w), mult in m.entries.items():
            nxt[v] += mult * h[w]
        h = nxt
        out.append([h[v] for v in d.vertices(k + 1)])
    return out


# ---------------------------------------------------------------- paths

@dataclass(frozen=True)
class FinitePath:
    """Edge list (level, source, target, edge_rank) from level 0 upward.

    ``start`` is only used for empty paths (a bare level-0 vertex, which
    still determines a cylinder).
    """

    edges: tuple[tuple[int, int, int, int], ...]
    start: tuple[int, int] | None = None

    def __post_init__(self):
        prev = None
        for k, (lvl, src, tgt, rank) in enumerate(self.edges):
            if rank < 0:
                raise ValueError(f"negative edge rank at position {k}")
            if prev is not None:
                plvl, _, ptgt, _ = prev
                if lvl != plvl + 1 or src != ptgt:
                    raise ValueError(
                        f"edge {k} does not chain: {prev} -> {self.edges[k]}")
            elif lvl != 0 and self.start is None:
                raise ValueError("paths must start at level 0")
            prev = self.edges[k]

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def terminal(self) -> tuple[int, int]:
        if self.edges:
            lvl, _, tgt, _ = self.edges[-1]
            return (lvl + 1, tgt)
        if self.start is None:
            raise ValueError("empty path without a start vertex")
        return self.start

    @property
    def initial(self) -> tuple[int, int]:
        if self.edges:
            lvl, src, _, _ = self.edges[0]
            return (lvl, src)
        return self.terminal


def path_in_diagram(d: Diagram, p: FinitePath) -> bool:
    if not p.edges:
        lvl, v = p.terminal
        return lvl <= d.depth and v in d.window(lvl)
    for (lvl, src, tgt, rank) in p.edges:
        if lvl >= d.depth:
            return False
        if rank >= d.F(lvl).multiplicity(tgt, src):
            return False
    return True


def enumerate_cylinders(d: Diagram, vertex: tuple[int, int],
                        cap: int = DEFAULT_PATH_CAP) -> list[FinitePath]:
    """All paths from level 0 ending at ``vertex`` = (level, index).

    The count equals the height H^(level)_index; enumeration refuses to
    build more than ``cap`` paths.
    """
    level, v = vertex
    if level < 0 or level > d.depth:
        raise CutsOutOfRange(f"level {level} outside diagram")
    if v not in d.window(level):
        raise KeyError(f"vertex {v} not on level {level}")
    h = heights(d, level)[d.window(level).position(v)]
    if h > cap:
        raise TooManyPaths(cap, h)
    if level == 0:
        return [FinitePath((), start=(0, v))]
    partial: list[tuple[tuple, int]] = [((), v)]
    for lvl in range(level - 1, -1, -1):
        m = d.F(lvl)
        nxt = []
        for (suffix, cur) in partial:
            for (w, mult) in m.row_entries(cur):
                for rank in range(mult):
                    nxt.append((((lvl, w, cur, rank),) + suffix, w))
        partial = nxt
    return [FinitePath(edges) for (edges, _) in partial]


def tail_equivalent(p: FinitePath, q: FinitePath):
    """Smallest m with identical edges from position m on, else None.

    None means not equivalent within the truncation (the paths still differ
    at their last edge).
    """
    if len(p) != len(q):
        raise LengthMismatch(f"path lengths {len(p)} != {len(q)}")
    if not p.edges:
        return 0 if p.terminal == q.terminal else None
    m = 0
    for k, (ep, eq) in enumerate(zip(p.edges, q.edges)):
        if ep != eq:
            m = k + 1
    return None if m == len(p) else m


# ---------------------------------------------------------------- order / Vershik

@dataclass(frozen=True)
class EdgeOrder:
    """Total order on incoming edges r^{-1}(v), per edge level and target.

    orders[level][target] lists (source, rank) pairs from minimal to
    maximal.  A stationary order stores level 0 only and reuses it.
    """

    orders: tuple[Mapping[int, tuple[tuple[int, int], ...]], ...]
    stationary: bool = False

    def order_at(self, level: int, target: int) -> tuple[tuple[int, int], ...]:
        table = self.orders[0] if self.stationary else self.orders[level]
        return table[target]


def natural_order(d: Diagram) -> EdgeOrder:
    """Sort incoming edges by (source, rank); stationary diagrams share it."""
    def table_for(m: IncidenceMatrix):
        t: dict[int, tuple[tuple[int, int], ...]] = {}
        for v in m.targets:
            pairs = []
            for (w, mult) in m.row_entries(v):
                pairs.extend((w, r) for r in range(mult))
            t[v] = tuple(pairs)
        return t

    if d.stationary:
        return EdgeOrder((table_for(d.F(0)),), stationary=True)
    return EdgeOrder(tuple(table_for(d.F(n)) for n in range(d.depth)))


def check_order(d: Diagram, order: EdgeOrder) -> None:
    """Each order list must be a bijection with the incoming edge set."""
    for n in range(d.depth):
        m = d.F(n)
        for v in m.targets:
            listed = order.order_at(n, v)
            expect = set()
            for (w, mult) in m.row_entries(v):
                expect.update((w, r) for r in range(mult))
            if set(listed) != expect or len(listed) != len(expect):
                raise WindowMismatch(
                    f"order at level {n}, target {v} is not a bijection with "
                    f"the incoming edges")


def minimal_path(d: Diagram, order: EdgeOrder, vertex: tuple[int, int]
                 ) -> FinitePath:
    level, v = vertex
    edges = []
    cur = v
    for lvl in range(level - 1, -1, -1):
        src, rank = order.order_at(lvl, cur)[0]
        edges.append((lvl, src, cur, rank))
        cur = src
    return FinitePath(tuple(reversed(edges)), start=(0, v) if not edges else None)


def vershik_successor(d: Diagram, order: EdgeOrder, p: FinitePath):
    """Adic successor: bump the first non-maximal edge, minimal prefix below.

    Returns None when every edge is maximal (the path is the last one of its
    tower in the lexicographic order).
    """
    for k, (lvl, src, tgt, rank) in enumerate(p.edges):
        lst = order.order_at(lvl, tgt)
        pos = lst.index((src, rank))
        if pos + 1 < len(lst):
            nsrc, nrank = lst[pos + 1]
            prefix = minimal_path(d, order, (lvl, nsrc)).edges
            return FinitePath(prefix + ((lvl, nsrc, tgt, nrank),)
                              + p.edges[k + 1:])
    return None


def vershik_orbit(d: Diagram, order: EdgeOrder, start: FinitePath,
                  limit: int = DEFAULT_PATH_CAP) -> list[FinitePath]:
    """Iterate the successor from ``start`` until the maximal path."""
    out = [start]
    cur = start
    while True:
        nxt = vershik_successor(d, order, cur)
        if nxt is None:
            return out
        out.append(nxt)
        cur = nxt
        if len(out) > limit:
            raise TooManyPaths(limit, f">{limit}")
