"""Dense primal log-barrier solver for small semidefinite programs.

Problems are ``minimize c^T x`` subject to affine symmetric matrix
inequalities. Every block is brought into the form ``G(x) >= 0``, shifted
by its strictness margin and normalized, then handled by damped Newton
centering on ``t c^T x - sum log det G_b(x)`` with a geometrically
increasing ``t``. An optional Euclidean ball ``|x| <= radius`` keeps the
barrier bounded below when the feasible set is unbounded.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.linalg

from .affine import LmiBlock, VarSpace

log = logging.getLogger(__name__)


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 200
    max_newton: int = 80
    newton_tol: float = 1e-9
    armijo: float = 0.01
    backtrack: float = 0.5
    barrier_factor: float = 0.2
    radius: float | None = None
    phase1_radius: float = 1e6


@dataclass(eq=False)
class LmiProblem:
    """``minimize objective @ x`` subject to every block."""

    dim: int
    objective: np.ndarray
    blocks: list
    varspace: VarSpace | None = None
    radius: float | None = None
    name: str = ""

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(self.dim)
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective must be finite")
        for b in self.blocks:
            if any(k >= self.dim or k < 0 for k in b.coeffs):
                raise ValueError(f"block {b.name!r} references a variable outside the problem")

    def margins(self, x) -> list:
        return [b.margin(x) for b in self.blocks]


@dataclass(eq=False)
class SdpSolution:
    status: Status
    x: np.ndarray
    objective: float
    margins: list
    iterations: int
    newton_steps: int = 0
    log: list = field(default_factory=list)
    values: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class _Std:
    """Blocks in standard form ``G0 + sum x_k G_k >= 0`` over their active variables."""

    def __init__(self, blocks, dim):
        self.items = []
        for b in blocks:
            sign = -1.0 if b.sense.startswith("<") else 1.0
            F0 = b.constant
            scale0 = float(np.abs(F0).max()) if F0.size else 0.0
            shift = b.eps if b.strict else 0.0
            idx = np.array(sorted(b.coeffs), dtype=int)
            lin = np.array([b.coeffs[k] for k in idx]) if len(idx) else np.zeros((0,) + F0.shape)
            norm = scale0 if scale0 > 0 else (float(np.abs(lin).max()) if lin.size else 1.0)
            G0 = (sign * F0 - shift * np.eye(b.size)) / norm
            Gk = sign * lin / norm
            self.items.append((idx, G0, Gk))
        self.dim = dim
        self.theta = sum(G0.shape[0] for _, G0, _ in self.items)

    def matrices(self, x):
        for idx, G0, Gk in self.items:
            yield idx, G0 + np.tensordot(x[idx], Gk, axes=1) if len(idx) else G0.copy(), Gk

    def min_eigs(self, x):
        return [float(np.linalg.eigvalsh(S)[0]) if S.size else np.inf for _, S, _ in self.matrices(x)]

    def barrier(self, x):
        """``-sum log det G_b(x)``, or ``inf`` outside the interior."""
        val = 0.0
        for _, S, _ in self.matrices(x):
            if not S.size:
                continue
            try:
                L = scipy.linalg.cholesky(S, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                return np.inf
            d = np.diag(L)
            if not np.all(np.isfinite(d)) or np.any(d <= 0):
                return np.inf
            val -= 2.0 * np.sum(np.log(d))
        return val

    def derivatives(self, x):
        """Barrier value, gradient and Hessian."""
        g = np.zeros(self.dim)
        H = np.zeros((self.dim, self.dim))
        val = 0.0
        for idx, S, Gk in self.matrices(x):
            s = S.shape[0]
            if not s:
                continue
            L = scipy.linalg.cholesky(S, lower=True, check_finite=False)
            val -= 2.0 * np.sum(np.log(np.diag(L)))
            a = len(idx)
            if not a:
                continue
            R = scipy.linalg.solve_triangular(L, Gk.transpose(1, 0, 2).reshape(s, a * s),
                                              lower=True, check_finite=False)
            R = R.reshape(s, a, s).transpose(2, 1, 0).reshape(s, a * s)
            W = scipy.linalg.solve_triangular(L, R, lower=True, check_finite=False)
            W = W.reshape(s, a, s).transpose(1, 0, 2).reshape(a, s * s)
            g[idx] -= W[:, :: s + 1].sum(axis=1)
            H[np.ix_(idx, idx)] += W @ W.T
        return val, g, H


def _ball(x, radius):
    if radius is None:
        return 0.0, 0.0, 0.0
    r2 = radius * radius - x @ x
    if r2 <= 0:
        return np.inf, None, None
    return -np.log(r2), 2.0 * x / r2, r2


def _newton_solve(H, rhs):
    d = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / d[:, None] / d[None, :]
    try:
        c = scipy.linalg.cho_factor(Hs, lower=True, check_finite=False)
        step = scipy.linalg.cho_solve(c, rhs / d, check_finite=False)
    except np.linalg.LinAlgError:
        step = np.linalg.lstsq(Hs + 1e-12 * np.eye(len(d)), rhs / d, rcond=None)[0]
    return step / d


class _Barrier:
    def __init__(self, std: _Std, c, radius):
        self.std, self.c, self.radius = std, c, radius
        self.theta = std.theta + (1 if radius is not None else 0)

    def value(self, x, t):
        b = _ball(x, self.radius)[0]
        if not np.isfinite(b):
            return np.inf
        v = self.std.barrier(x)
        return t * (self.c @ x) + v + b if np.isfinite(v) else np.inf

    def center(self, x, t, opts: SolverOptions, trace):
        """Damped Newton centering; returns the new point and step count."""
        steps = 0
        for _ in range(opts.max_newton):
            val, g, H = self.std.derivatives(x)
            if self.radius is not None:
                bval, bg, r2 = _ball(x, self.radius)
                val += bval
                g = g + bg
                H = H + (2.0 / r2) * np.eye(len(x)) + np.outer(bg, bg)
            f = t * (self.c @ x) + val
            grad = t * self.c + g
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(H))):
                raise FloatingPointError("non-finite Newton system")
            dx = _newton_solve(H, -grad)
            lam2 = float(-grad @ dx)
            steps += 1
            if not np.isfinite(lam2):
                raise FloatingPointError("non-finite Newton decrement")
            if lam2 / 2 <= opts.newton_tol:
                break
            alpha = 1.0
            while True:
                xn = x + alpha * dx
                fn = self.value(xn, t)
                if np.isfinite(fn) and fn <= f - opts.armijo * alpha * lam2:
                    break
                alpha *= opts.backtrack
                if alpha < 1e-14:
                    return x, steps
            x = xn
            trace.append(float(self.c @ x))
        return x, steps

    def initial_t(self, x):
        _, g, H = self.std.derivatives(x)
        if self.radius is not None:
            _, bg, r2 = _ball(x, self.radius)
            g = g + bg
            H = H + (2.0 / r2) * np.eye(len(x)) + np.outer(bg, bg)
        hc = _newton_solve(H, self.c)
        denom = float(self.c @ hc)
        if denom <= 0:
            return 1.0
        t = -float(g @ hc) / denom
        return float(np.clip(t, 1e-6, 1e6)) if t > 0 else 1.0


def _run(bar: _Barrier, x, opts: SolverOptions, stop=None):
    """Barrier path following from a strictly feasible ``x``."""
    t = bar.initial_t(x)
    trace = []
    newton = 0
    for it in range(1, opts.max_iter + 1):
        x, k = bar.center(x, t, opts, trace)
        newton += k
        obj = float(bar.c @ x)
        if stop is not None and stop(x):
            return x, it, newton, trace, True
        if bar.theta / t <= opts.gap_tol * max(1.0, abs(obj)):
            return x, it, newton, trace, True
        t /= opts.barrier_factor
    return x, opts.max_iter, newton, trace, False


def feasibility_phase1(prob: LmiProblem, opts: SolverOptions | None = None, x0=None):
    """Find a strictly feasible point.

    Maximizes the common margin ``s`` with ``G_b(x) - s I >= 0`` for every
    standardized block (strictness shifts included). Returns
    ``(feasible, x, s)``; ``feasible`` is true when ``s > 0``. The search
    stops as soon as a positive margin is reached.
    """
    feasible, x, s, _ = _phase1(prob, opts, x0)
    return feasible, x, s


def _phase1(prob: LmiProblem, opts: SolverOptions | None = None, x0=None):
    """Phase 1 with a fourth return value: whether the search converged."""
    opts = opts or SolverOptions()
    std = _Std(prob.blocks, prob.dim)
    x0 = np.zeros(prob.dim) if x0 is None else np.asarray(x0, dtype=float).copy()
    if not std.items:
        return True, x0, np.inf, True
    eigs = std.min_eigs(x0)
    if min(eigs) > 0:
        return True, x0, min(eigs), True
    # augmented variable z = (x, s); block G_b(x) - s I
    items = []
    for idx, G0, Gk in std.items:
        s = G0.shape[0]
        items.append((np.append(idx, prob.dim), G0, np.concatenate([Gk, -np.eye(s)[None]], axis=0)))
    aug = _Std([], prob.dim + 1)
    aug.items = items
    aug.theta = std.theta
    c = np.zeros(prob.dim + 1)
    c[-1] = -1.0
    s0 = min(eigs) - 1.0
    z = np.append(x0, s0)
    radius = max(opts.phase1_radius, 2.0 * np.linalg.norm(z) + 1.0)
    bar = _Barrier(aug, c, radius)
    p1 = replace(opts, gap_tol=max(opts.gap_tol, 1e-10))
    try:
        z, _, _, _, done = _run(bar, z, p1, stop=lambda zz: zz[-1] > 0)
    except FloatingPointError:
        return False, z[:-1], float(z[-1]), True
    s = float(z[-1])
    return s > 0, z[:-1], s, done


def solve(prob: LmiProblem, opts: SolverOptions | None = None, x0=None) -> SdpSolution:
    """Minimize ``prob.objective @ x`` over the blocks of ``prob``."""
    opts = opts or SolverOptions()
    std = _Std(prob.blocks, prob.dim)
    radius = prob.radius if prob.radius is not None else opts.radius
    x = np.zeros(prob.dim) if x0 is None else np.asarray(x0, dtype=float).copy()
    if radius is not None and np.linalg.norm(x) >= radius:
        x = x * (0.5 * radius / np.linalg.norm(x))
    if not (std.items and min(std.min_eigs(x)) > 0):
        if radius is not None:
            opts1 = replace(opts, phase1_radius=min(opts.phase1_radius, 0.9 * radius))
        else:
            opts1 = opts
        feasible, x, s, done = _phase1(prob, opts1, x)
        if not feasible:
            status = Status.INFEASIBLE if done else Status.MAX_ITERATIONS
            return _solution(prob, std, status, x, 0, 0, [])
        if radius is not None and np.linalg.norm(x) >= radius:
            radius = 2.0 * np.linalg.norm(x)
    bar = _Barrier(std, prob.objective, radius)
    try:
        x, it, newton, trace, done = _run(bar, x, opts)
    except FloatingPointError as exc:
        log.debug("numerical failure: %s", exc)
        return _solution(prob, std, Status.NUMERICAL_FAILURE, x, 0, 0, [])
    status = Status.OPTIMAL if done else Status.MAX_ITERATIONS
    return _solution(prob, std, status, x, it, newton, trace, opts)


def _solution(prob, std, status, x, it, newton, trace, opts=None):
    margins = std.min_eigs(x) if std.items else []
    if status is Status.OPTIMAL and opts is not None and min(margins, default=0.0) < -opts.feas_tol:
        status = Status.NUMERICAL_FAILURE
    values = prob.varspace.unpack(x) if prob.varspace is not None else {}
    return SdpSolution(status, x, float(prob.objective @ x), margins, it, newton, trace, values)


def dump_problem(prob: LmiProblem, path) -> None:
    """Write ``prob`` as sparse triplets for external cross-checking.

    Header lines start with ``#``. Each data line is
    ``block row col var coefficient`` with ``var = -1`` for the constant
    term; only the upper triangle (``row <= col``) is listed. Blocks are
    declared first as ``block id size sense`` and the objective as
    ``objective var coefficient`` lines.
    """
    with open(path, "w") as fh:
        fh.write(f"# dim {prob.dim}\n# blocks {len(prob.blocks)}\n")
        for b_id, b in enumerate(prob.blocks):
            fh.write(f"block {b_id} {b.size} {b.sense}\n")
        for k in np.nonzero(prob.objective)[0]:
            fh.write(f"objective {k} {float(prob.objective[k])!r}\n")
        for b_id, b in enumerate(prob.blocks):
            terms = [(-1, b.constant)] + sorted(b.coeffs.items())
            for var, M in terms:
                rows, cols = np.nonzero(np.triu(M))
                for r, c in zip(rows, cols):
                    fh.write(f"{b_id} {r} {c} {var} {float(M[r, c])!r}\n")


def load_problem(path) -> LmiProblem:
    """Inverse of :func:`dump_problem` (variable metadata is not preserved)."""
    dim = 0
    senses, sizes, objective, entries = {}, {}, {}, {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                if parts[1] == "dim":
                    dim = int(parts[2])
                continue
            if parts[0] == "block":
                sizes[int(parts[1])] = int(parts[2])
                senses[int(parts[1])] = parts[3]
            elif parts[0] == "objective":
                objective[int(parts[1])] = float(parts[2])
            else:
                b, r, c, v = (int(p) for p in parts[:4])
                entries.setdefault(b, []).append((r, c, v, float(parts[4])))
    blocks = []
    for b_id in sorted(senses):
        size = sizes[b_id]
        const = np.zeros((size, size))
        coeffs = {}
        for r, c, v, val in entries.get(b_id, []):
            M = const if v < 0 else coeffs.setdefault(v, np.zeros((size, size)))
            M[r, c] = val
            M[c, r] = val
        blocks.append(LmiBlock(const, coeffs, senses[b_id]))
    c = np.zeros(dim)
    for k, v in objective.items():
        c[k] = v
    return LmiProblem(dim, c, blocks)
