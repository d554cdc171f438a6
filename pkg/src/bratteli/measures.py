"""Tail-invariant measures on path spaces of Bratteli diagrams.

A tail-invariant measure assigns to every cylinder through a level-n vertex
v the same value mu^(n)_v, and the per-level vectors are linked by the
transposed incidence matrices: A_n mu^(n+1) = mu^(n) with A_n = F_n^T.
This module verifies that recursion, builds the stationary Perron measure
mu^(n) = t / lambda^(n-1), solves the nonstationary problem by backward
propagation from a deep anchor, converts cylinder values to tower masses
s^(n) = mu^(n) * H^(n), and exposes the exactly row-stochastic hat matrices
fhat_vw = (H^(n)_w / H^(n+1)_v) f_vw in rational arithmetic.

Normalization conventions (the two useful scalings differ by lambda):
  "level0"      : sum of t over the level-0 window is 1
  "probability" : total path-space mass sum_v mu^(n)_v H^(n)_v is 1
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import perron
from .diagram import Diagram, IncidenceMatrix, heights


class DimensionMismatch(Exception):
    pass


class PFFailed(Exception):
    pass


# ---------------------------------------------------------------- types

@dataclass(frozen=True)
class MeasureSequence:
    """Per-level nonnegative vectors aligned to the diagram windows.

    kind is "CylinderValues" (mu^(n), one value per cylinder through the
    vertex) or "TowerMasses" (s^(n) = mu^(n) * H^(n), one value per tower).
    """

    vectors: tuple[np.ndarray, ...]
    kind: str
    meta: Mapping[str, object] = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return len(self.vectors) - 1

    def level(self, n: int) -> np.ndarray:
        return self.vectors[n]


@dataclass(frozen=True)
class HatMatrix:
    """Row-stochastic rescaling of an incidence matrix, exact rationals.

    entries[(v, w)] = H^(n)_w * f_vw / H^(n+1)_v.  Because the truncated
    heights satisfy H^(n+1)_v = sum_w f_vw H^(n)_w by construction, every
    row sums to exactly 1 -- including rows clipped by the window.
    """

    level: int
    entries: Mapping[tuple[int, int], Fraction]
    targets: tuple[int, ...]
    sources: tuple[int, ...]

    def row_sum(self, v: int) -> Fraction:
        return sum((q for (t, _), q in self.entries.items() if t == v),
                   Fraction(0))

    def to_dense(self) -> np.ndarray:
        tp = {v: i for i, v in enumerate(self.targets)}
        sp = {w: j for j, w in enumerate(self.sources)}
        out = np.zeros((len(self.targets), len(self.sources)))
        for (v, w), q in self.entries.items():
            out[tp[v], sp[w]] = float(q)
        return out


def hat_matrix(d: Diagram, n: int) -> HatMatrix:
    h_lo = heights(d, n)
    h_hi = heights(d, n + 1)
    m = d.F(n)
    lo_pos = {w: j for j, w in enumerate(m.sources)}
    hi_pos = {v: i for i, v in enumerate(m.targets)}
    entries = {(v, w): Fraction(h_lo[lo_pos[w]] * mult, h_hi[hi_pos[v]])
               for (v, w), mult in m.entries.items()}
    return HatMatrix(n, entries, m.targets, m.sources)


# ---------------------------------------------------------------- verify

def _check_lengths(d: Diagram, m: MeasureSequence):
    if m.depth != d.depth:
        raise DimensionMismatch(
            f"measure covers levels 0..{m.depth}, diagram 0..{d.depth}")
    for n, vec in enumerate(m.vectors):
        want = len(d.window(n))
        if len(vec) != want:
            raise DimensionMismatch(
                f"level {n} vector has {len(vec)} entries, window has {want}")


@dataclass(frozen=True)
class InvarianceReport:
    residuals: tuple[float, ...]
    passed: bool
    zero_measure: bool
    tol: float


def verify_tail_invariance(d: Diagram, m: MeasureSequence,
                           tol: float = 1e-10, eps: float = 1e-300
                           ) -> InvarianceReport:
    """Per-level relative l1 residuals of A_n mu^(n+1) = mu^(n).

    Rows whose incidence column was clipped by the window are excluded
    from both sides of the norm, so truncation cannot fail the check.
    """
    if m.kind != "CylinderValues":
        raise DimensionMismatch("tail invariance applies to CylinderValues")
    _check_lengths(d, m)
    residuals = []
    zero = all(float(np.abs(v).sum()) == 0.0 for v in m.vectors)
    for n in range(d.depth):
        F = d.F(n)
        A = F.to_dense().T
        mask = F.interior_cols()
        diff = A @ m.vectors[n + 1] - m.vectors[n]
        num = float(np.abs(diff[mask]).sum())
        den = max(float(np.abs(m.vectors[n][mask]).sum()), eps)
        residuals.append(num / den if not zero else 0.0)
    passed = all(r < tol for r in residuals)
    return InvarianceReport(tuple(residuals), passed, zero, tol)


# ---------------------------------------------------------------- builders

@dataclass(frozen=True)
class NormalizationReport:
    lam: float
    t_sum_raw: float
    t_sum: float
    total_mass: float
    normalization: str
    spectral: perron.SpectralData


def stationary_pf_measure(d: Diagram, normalization: str = "level0",
                          windows=None, **pf_kwargs
                          ) -> tuple[MeasureSequence, NormalizationReport]:
    """mu^(n) = t / lambda^(n-1) from the Perron data of A = F^T.

    The returned scaling follows ``normalization``: "level0" makes t sum to
    1 over the window, "probability" makes the total mass
    sum_v mu^(n)_v H^(n)_v equal 1 (the two differ by a factor lambda), and
    "anchored" keeps pf_solve's center-anchored vector.  On truncated
    windows the level-0 sum is reported as-is; whether it stabilizes under
    window growth is the caller's diagnostic for sigma-finiteness.
    """
    if not d.stationary:
        raise PFFailed("stationary_pf_measure needs a stationary diagram")
    try:
        sd = perron.pf_solve(windows if windows is not None
                             else perron.incidence_transpose(d.F(0)),
                             **pf_kwargs)
    except (perron.NoConvergence, perron.WindowUnstable, ValueError) as exc:
        raise PFFailed(str(exc)) from exc
    if tuple(sd.vertices) != d.vertices(0):
        raise PFFailed("spectral window does not match the diagram window")
    t_raw = sd.right
    raw_sum = float(t_raw.sum())
    if normalization == "level0":
        t = t_raw / raw_sum
    elif normalization == "probability":
        t = t_raw / (sd.lam * raw_sum)
    elif normalization == "anchored":
        t = t_raw
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    vectors = tuple(t * sd.lam ** (1 - n) for n in range(d.depth + 1))
    hs = [np.array([float(h) for h in heights(d, n)])
          for n in range(d.depth + 1)]
    total = float(vectors[1] @ hs[1]) if d.depth >= 1 else float(t.sum())
    meas = MeasureSequence(vectors, "CylinderValues",
                           {"lam": sd.lam, "normalization": normalization})
    report = NormalizationReport(sd.lam, raw_sum, float(t.sum()), total,
                                 normalization, sd)
    return meas, report


def solve_tail_invariant(d: Diagram, anchor=None) -> MeasureSequence:
    """Backward propagation mu^(n) = A_n mu^(n+1) from a level-N anchor.

    The anchor defaults to the uniform probability vector on the deepest
    window.  Consistency holds by construction, so the result passes
    verify_tail_invariance at round-off level.
    """
    m_top = len(d.window(d.depth))
    if anchor is None:
        anchor = np.full(m_top, 1.0 / m_top)
    anchor = np.asarray(anchor, dtype=np.float64)
    if len(anchor) != m_top:
        raise DimensionMismatch(
            f"anchor has {len(anchor)} entries, top window has {m_top}")
    if (anchor < 0).any():
        raise ValueError("anchor must be nonnegative")
    vecs = [anchor]
    for n in range(d.depth - 1, -1, -1):
        A = d.F(n).to_dense().T
        vecs.append(A @ vecs[-1])
    return MeasureSequence(tuple(reversed(vecs)), "CylinderValues")


# ---------------------------------------------------------------- ERS/ECS

@dataclass(frozen=True)
class SumClassification:
    kind: str                       # "ERS" | "ECS" | "both" | "neither"
    row_sums: tuple[int, ...] | None
    col_sums: tuple[int, ...] | None
    ers_level_sums: tuple[Fraction, ...] | None

    @property
    def is_ers(self) -> bool:
        return self.kind in ("ERS", "both")

    @property
    def is_ecs(self) -> bool:
        return self.kind in ("ECS", "both")


def _uniform_sum(m: IncidenceMatrix, rows: bool) -> int | None:
    """The shared row (or column) sum, from the claim or interior data."""
    claim = m.row_sum_claim if rows else m.col_sum_claim
    if claim is not None:
        return int(claim)
    sums = m.row_sums() if rows else m.col_sums()
    mask = m.interior_rows() if rows else m.interior_cols()
    vals = {int(s) for s, ok in zip(sums, mask) if ok}
    return vals.pop() if len(vals) == 1 else None


def ers_ecs_classify(d: Diagram) -> SumClassification:
    """Equal-row-sum / equal-column-sum detection, exact integers.

    For ERS(r_n) diagrams the level sums of any tail-invariant measure with
    sum mu^(0) = 1 are pinned: sum_v mu^(n+1)_v = (r_0 ... r_n)^-1, reported
    here as exact fractions.
    """
    rows = [_uniform_sum(m, True) for m in d.matrices]
    cols = [_uniform_sum(m, False) for m in d.matrices]
    ers = all(r is not None for r in rows)
    ecs = all(c is not None for c in cols)
    level_sums = None
    if ers:
        level_sums = [Fraction(1)]
        for r in rows:
            level_sums.append(level_sums[-1] / r)
        level_sums = tuple(level_sums)
    kind = {(True, True): "both", (True, False): "ERS",
            (False, True): "ECS", (False, False): "neither"}[(ers, ecs)]
    return SumClassification(kind,
                             tuple(rows) if ers else None,
                             tuple(cols) if ecs else None,
                             level_sums)


# ---------------------------------------------------------------- towers

@dataclass(frozen=True)
class TowerReport:
    masses: MeasureSequence
    recursion_residuals: tuple[float, ...]
    level_sums: tuple[float, ...]
    probability: bool


def tower_masses(d: Diagram, m: MeasureSequence, tol: float = 1e-10
                 ) -> TowerReport:
    """s^(n)_v = mu^(n)_v H^(n)_v plus a check of s^(n+1) Fhat_n = s^(n).

    The level sums of s are the total path-space mass and are constant in n
    for an exactly tail-invariant measure; probability=True when they sit
    at 1 within tol.
    """
    if m.kind != "CylinderValues":
        raise DimensionMismatch("tower masses start from CylinderValues")
    _check_lengths(d, m)
    svecs = []
    for n in range(d.depth + 1):
        h = np.array([float(x) for x in heights(d, n)])
        svecs.append(m.vectors[n] * h)
    residuals = []
    for n in range(d.depth):
        fhat = hat_matrix(d, n).to_dense()
        diff = svecs[n + 1] @ fhat - svecs[n]
        mask = d.F(n).interior_cols()
        den = max(float(np.abs(svecs[n][mask]).sum()), 1e-300)
        residuals.append(float(np.abs(diff[mask]).sum()) / den)
    sums = tuple(float(s.sum()) for s in svecs)
    prob = all(abs(x - 1.0) < tol for x in sums)
    masses = MeasureSequence(tuple(svecs), "TowerMasses", dict(m.meta))
    return TowerReport(masses, tuple(residuals), sums, prob)
