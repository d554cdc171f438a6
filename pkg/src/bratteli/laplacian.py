"""Weighted network, Laplacian, harmonic solver and random walk.

A Markov system's dual kernel pair turns the diagram into an electrical
network: the conductance between v at level n and u at level n+1 is
c_n(v, u) = (1/2) q^(n)_v phat_n(v, u), which equals
(1/2) q^(n+1)_u qhat_n(u, v) by detailed balance -- symmetry is an identity,
not a tolerance.  The induced reversible kernel M averages half up, half
down; the Laplacian is Delta f = c (f - Mf) with c the total conductance at
the vertex (the level mass q on two-sided levels).

Truncation needs a boundary rule: "reflect" (default) sends the full unit
mass across the single available side at levels 0 and N; "absorb" freezes
the value there (M = identity on the boundary rows).

The random walk runs on the flattened state space with the compiled
kernels from _accel; per-trial seeds make every statistic independent of
scheduling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _accel
from .markov import HatKernels
from .measures import DimensionMismatch
from .perron import NoConvergence


class BalanceViolation(Exception):
    def __init__(self, level: int, v: int, u: int, delta: float):
        super().__init__(f"conductance asymmetry {delta:.3e} between level-"
                         f"{level} vertex {v} and level-{level + 1} vertex {u}")
        self.level = level
        self.v = v
        self.u = u
        self.delta = delta


# ---------------------------------------------------------------- types

@dataclass(frozen=True)
class LevelFunction:
    """One real vector per level, 0..N."""

    values: tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.values) - 1

    def level(self, n: int) -> np.ndarray:
        return self.values[n]

    @staticmethod
    def of(vectors: Sequence) -> "LevelFunction":
        return LevelFunction(tuple(np.asarray(v, dtype=np.float64)
                                   for v in vectors))

    @staticmethod
    def constant(net: "WeightedNetwork", value: float) -> "LevelFunction":
        return LevelFunction(tuple(np.full(len(q), float(value))
                                   for q in net.kernels.q))


@dataclass(frozen=True)
class WeightedNetwork:
    kernels: HatKernels
    conduct: tuple[np.ndarray, ...]       # c_n(v, u), shape m_n x m_{n+1}
    vertex_mass: tuple[np.ndarray, ...]   # total conductance at each vertex
    boundary: str = "reflect"
    mass_vs_q_dev: float = 0.0

    @property
    def depth(self) -> int:
        return self.kernels.depth


def build_network(hk: HatKernels, boundary: str = "reflect",
                  tol: float = 1e-12) -> WeightedNetwork:
    """Conductances from the kernel pair, with the symmetry check.

    The two detailed-balance sides are computed independently and compared;
    a mismatch beyond tol (relative) means the supplied kernels are not a
    dual pair and raises BalanceViolation.  Vertex masses are recomputed
    from the conductances; on two-sided levels they reproduce q^(n) and the
    worst deviation is kept as a diagnostic.
    """
    if boundary not in ("reflect", "absorb"):
        raise ValueError(f"unknown boundary policy {boundary!r}")
    if hk.depth < 1:
        raise DimensionMismatch("a network needs at least two levels")
    conduct = []
    for n in range(hk.depth):
        up = 0.5 * hk.q[n][:, None] * hk.phat[n]
        down = 0.5 * (hk.q[n + 1][:, None] * hk.qhat[n]).T
        delta = np.abs(up - down)
        scale = np.maximum(np.abs(up), 1e-300)
        if (delta > tol * scale).any():
            v, u = np.unravel_index(int(np.argmax(delta / scale)), up.shape)
            verts_lo = hk.diagram.vertices(n)
            verts_hi = hk.diagram.vertices(n + 1)
            raise BalanceViolation(n, int(verts_lo[v]), int(verts_hi[u]),
                                   float(delta[v, u]))
        conduct.append(up)
    masses = []
    dev = 0.0
    for n in range(hk.depth + 1):
        m = np.zeros(len(hk.q[n]))
        if n < hk.depth:
            m += conduct[n].sum(axis=1)
        if n > 0:
            m += conduct[n - 1].sum(axis=0)
        if 0 < n < hk.depth:
            dev = max(dev, float(np.abs(m - hk.q[n]).max()
                                 / max(hk.q[n].max(), 1e-300)))
        masses.append(m)
    return WeightedNetwork(hk, tuple(conduct), tuple(masses), boundary, dev)


# ---------------------------------------------------------------- operators

def _check_f(net: WeightedNetwork, f: LevelFunction):
    if f.depth != net.depth:
        raise DimensionMismatch(
            f"function has {f.depth + 1} levels, network {net.depth + 1}")
    for n, vec in enumerate(f.values):
        if vec.shape != net.kernels.q[n].shape:
            raise DimensionMismatch(f"level {n} length mismatch")


def apply_M(net: WeightedNetwork, f: LevelFunction) -> LevelFunction:
    """Mf_n = (1/2)(phat_n f_{n+1} + qhat_{n-1} f_{n-1}) on interior levels;
    boundary rows follow the network's policy."""
    _check_f(net, f)
    hk = net.kernels
    N = net.depth
    out = []
    for n in range(N + 1):
        up = hk.phat[n] @ f.values[n + 1] if n < N else None
        dn = hk.qhat[n - 1] @ f.values[n - 1] if n > 0 else None
        if up is not None and dn is not None:
            out.append(0.5 * (up + dn))
        elif net.boundary == "absorb":
            out.append(f.values[n].copy())
        else:
            out.append(up if up is not None else dn)
    return LevelFunction(tuple(out))


def apply_Delta(net: WeightedNetwork, f: LevelFunction) -> LevelFunction:
    """Delta f = c (f - Mf) with c the vertex conductance mass."""
    mf = apply_M(net, f)
    return LevelFunction(tuple(c * (fv - mv) for c, fv, mv in
                               zip(net.vertex_mass, f.values, mf.values)))


def qM_identity_residual(net: WeightedNetwork) -> float:
    """max deviation in q^(n) M = (1/2)(q^(n+1) + q^(n-1)), interior levels.

    The up-component is the defining propagation q^(n) phat = q^(n+1); the
    down-component is the duality identity, so this is a round-off check.
    """
    hk = net.kernels
    worst = 0.0
    for n in range(1, net.depth):
        up = hk.q[n] @ (0.5 * hk.phat[n])
        dn = hk.q[n] @ (0.5 * hk.qhat[n - 1])
        worst = max(worst,
                    float(np.abs(up - 0.5 * hk.q[n + 1]).max()),
                    float(np.abs(dn - 0.5 * hk.q[n - 1]).max()))
    return worst


# ---------------------------------------------------------------- harmonic

@dataclass(frozen=True)
class HarmonicSolution:
    f: LevelFunction
    iterations: int
    residual: float
    max_principle_ok: bool


def solve_harmonic(net: WeightedNetwork, bottom, top, tol: float = 1e-8,
                   maxiter: int = 10_000, omega: float = 0.9
                   ) -> HarmonicSolution:
    """Damped-Jacobi solve of 2 f_n = phat_n f_{n+1} + qhat_{n-1} f_{n-1}
    with f_0, f_N pinned to the given boundary data.

    The iteration is monotone averaging, so the discrete maximum principle
    must hold on the result; it is asserted and reported.
    """
    hk = net.kernels
    N = net.depth
    if N < 2:
        raise DimensionMismatch("harmonic solve needs at least one interior level")
    f = [np.zeros(len(q)) for q in hk.q]
    f[0] = np.broadcast_to(np.asarray(bottom, dtype=np.float64),
                           f[0].shape).copy()
    f[N] = np.broadcast_to(np.asarray(top, dtype=np.float64),
                           f[N].shape).copy()
    residual = math.inf
    for it in range(1, maxiter + 1):
        residual = 0.0
        new = [f[0]] + [None] * (N - 1) + [f[N]]
        for n in range(1, N):
            avg = 0.5 * (hk.phat[n] @ f[n + 1] + hk.qhat[n - 1] @ f[n - 1])
            residual = max(residual, float(np.abs(avg - f[n]).max()) * 2.0)
            new[n] = (1.0 - omega) * f[n] + omega * avg
        f = new
        if residual < tol:
            break
    else:
        raise NoConvergence(maxiter, residual)
    lo = min(float(f[0].min()), float(f[N].min()))
    hi = max(float(f[0].max()), float(f[N].max()))
    ok = all(float(v.min()) >= lo - 1e-12 and float(v.max()) <= hi + 1e-12
             for v in f[1:N])
    return HarmonicSolution(LevelFunction(tuple(f)), it, residual, ok)


# ---------------------------------------------------------------- energy

@dataclass(frozen=True)
class EnergyReport:
    direct: float
    operator_form: float

    @property
    def agreement(self) -> float:
        return abs(self.direct - self.operator_form) / (1.0 + abs(self.direct))


def energy_norm(net: WeightedNetwork, f: LevelFunction) -> EnergyReport:
    """Dirichlet energy, twice over.

    direct sums (1/2) q_v phat(v,u) (f_n(v) - f_{n+1}(u))^2 over level
    pairs; operator_form expands the square into weighted norms and the
    T_P cross term.  Equality is an algebraic identity (the cross-level
    weight is q^(n+1) because q propagates through phat).
    """
    _check_f(net, f)
    hk = net.kernels
    direct = 0.0
    oper = 0.0
    for n in range(net.depth):
        fn, fn1 = f.values[n], f.values[n + 1]
        diff = fn[:, None] - fn1[None, :]
        direct += 0.5 * float(np.sum(hk.q[n][:, None] * hk.phat[n] * diff ** 2))
        nn = float(np.sum(hk.q[n] * fn * fn))
        cross = float(np.sum(hk.q[n] * fn * (hk.phat[n] @ fn1)))
        nn1 = float(np.sum(hk.q[n + 1] * fn1 * fn1))
        oper += 0.5 * (nn - 2.0 * cross + nn1)
    return EnergyReport(direct, oper)


# ---------------------------------------------------------------- walks

@dataclass(frozen=True)
class WalkTrace:
    states: tuple[tuple[int, int], ...]   # (level, vertex index)
    seed: int


@dataclass(frozen=True)
class WalkStats:
    trials: int
    steps: int
    returns: np.ndarray
    return_probability: float
    mean_returns_per_step: float
    trace: WalkTrace | None
    backend: str


@dataclass(frozen=True)
class HittingEstimate:
    estimate: float
    stderr: float
    top_hits: int
    bottom_hits: int
    timeouts: int
    trials: int
    backend: str


def _flatten(net: WeightedNetwork):
    """CSR-like move table of the M-chain over all (level, vertex) states."""
    hk = net.kernels
    sizes = [len(q) for q in hk.q]
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    level_of = np.concatenate([np.full(s, n, dtype=np.int64)
                               for n, s in enumerate(sizes)])
    rowptr = [0]
    cum: list[float] = []
    tgt: list[int] = []
    N = net.depth
    for n, s in enumerate(sizes):
        for i in range(s):
            moves: list[tuple[float, int]] = []
            if n < N:
                w_up = 1.0 if n == 0 else 0.5
                row = hk.phat[n][i]
                moves += [(w_up * row[j], offsets[n + 1] + j)
                          for j in np.nonzero(row)[0]]
            if n > 0:
                w_dn = 1.0 if n == N else 0.5
                row = hk.qhat[n - 1][i]
                moves += [(w_dn * row[j], offsets[n - 1] + j)
                          for j in np.nonzero(row)[0]]
            if net.boundary == "absorb" and (n == 0 or n == N):
                moves = [(1.0, offsets[n] + i)]
            acc = np.cumsum([p for p, _ in moves])
            acc[-1] = 1.0
            cum.extend(acc.tolist())
            tgt.extend(j for _, j in moves)
            rowptr.append(len(cum))
    return (np.asarray(rowptr[:-1], dtype=np.int64),
            np.asarray(cum, dtype=np.float64),
            np.asarray(tgt, dtype=np.int64), level_of, offsets)


def _state_of(net: WeightedNetwork, start: tuple[int, int],
              offsets: np.ndarray) -> int:
    level, vertex = start
    win = net.kernels.diagram.window(level)
    return int(offsets[level] + win.position(vertex))


def walk(net: WeightedNetwork, start: tuple[int, int], steps: int,
         trials: int, seed: int = 0, record_trace: bool = True) -> WalkStats:
    """Sample the M-chain; counts returns to the start state.

    Fixing the seed fixes every trajectory exactly, in either backend and
    any thread count, because trial streams are derived from (seed, index).
    """
    rowptr, cum, tgt, level_of, offsets = _flatten(net)
    s0 = _state_of(net, start, offsets)
    s1s, s2s = _accel.trial_seeds(seed, trials)
    returns = _accel.walk_returns_kernel(rowptr, cum, tgt, np.int64(s0),
                                         np.int64(steps), s1s, s2s)
    trace = None
    if record_trace:
        path = _accel.walk_trace_kernel(rowptr, cum, tgt, np.int64(s0),
                                        np.int64(steps),
                                        s1s[0], s2s[0])
        d = net.kernels.diagram
        states = []
        for st in path:
            lvl = int(level_of[st])
            states.append((lvl, int(d.vertices(lvl)[st - offsets[lvl]])))
        trace = WalkTrace(tuple(states), seed)
    return WalkStats(trials, steps, returns,
                     float(np.mean(returns > 0)),
                     float(returns.sum()) / (trials * steps),
                     trace, _accel.backend())


def hitting_probability(net: WeightedNetwork, start: tuple[int, int],
                        trials: int, seed: int = 0,
                        max_steps: int = 10_000,
                        parallel: bool | None = None) -> HittingEstimate:
    """P(reach the top level before level 0), estimated by absorbed walks.

    This is the Monte-Carlo counterpart of solve_harmonic with boundary
    data 0 at the bottom and 1 at the top.
    """
    rowptr, cum, tgt, level_of, offsets = _flatten(net)
    s0 = _state_of(net, start, offsets)
    s1s, s2s = _accel.trial_seeds(seed, trials)
    if parallel is None:
        parallel = _accel.HAVE_NUMBA and trials >= 10_000
    kern = (_accel.walk_hitting_parallel if parallel and _accel.HAVE_NUMBA
            else _accel.walk_hitting_kernel)
    res = kern(rowptr, cum, tgt, level_of, np.int64(s0), np.int64(0),
               np.int64(net.depth), np.int64(max_steps), s1s, s2s)
    top = int(np.sum(res == 1))
    bot = int(np.sum(res == 0))
    out = int(np.sum(res == -1))
    decided = max(top + bot, 1)
    p = top / decided
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / decided)
    return HittingEstimate(p, se, top, bot, out, trials, _accel.backend())
