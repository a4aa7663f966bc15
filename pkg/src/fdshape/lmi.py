"""Matrix inequalities for gain analysis and filter synthesis.

Analysis: the bounded-real inequality (certifies ``|G|_inf < gamma``) and the
minimum-gain inequality (sufficient for ``|G|_- >= nu``).

Synthesis, in the transformed variables ``X1, Y1, An, Bn, Cn, Dn``:

* the maximum-gain block ``M`` (affine),
* the minimum-gain block ``N`` (bilinear in the filter variables and the
  slacks ``Xs, Ys, Zs``; affine once either group is fixed),
* the coupling block ``[[X1, I], [I, Y1]] > 0``.

The block formulas are written once in :func:`m_block` and :func:`n_block`
and accept either numbers or :class:`~fdshape.affine.Affine` expressions for
each symbol, so one definition serves evaluation and both affine slicings of
the bilinear block.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine import Affine, LmiBlock, VarSpace, bmat
from .errors import DimensionMismatch
from .lti import StateSpace
from .plant import GeneralizedPlant
from .sdp import LmiProblem, SolverOptions, feasibility_phase1

EPS = 1e-7


def _is_aff(*xs):
    return any(isinstance(x, Affine) for x in xs)


def _block(rows):
    dims = [x.dim for row in rows for x in row if isinstance(x, Affine)]
    if dims:
        return bmat(rows, dims[0])
    return np.block([[np.asarray(x, dtype=float) for x in row] for row in rows])


def _scaled_eye(s, m):
    """``s * I_m`` for a scalar ``s`` that may be a 1x1 affine expression."""
    if isinstance(s, Affine):
        return Affine(s.const[0, 0] * np.eye(m), s.lin[:, 0, 0][:, None, None] * np.eye(m))
    return float(np.asarray(s).reshape(())) * np.eye(m)


# --- analysis --------------------------------------------------------------


def brl_analysis_lmi(sys: StateSpace, gamma: float, eps: float = EPS) -> LmiProblem:
    """Bounded-real feasibility problem: feasible iff ``|G|_inf < gamma``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    n, m, p = sys.n, sys.m, sys.p
    vs = VarSpace([("X", (n, n), True)])
    blocks = []
    if n:
        X = vs["X"]
        L = _block([
            [X @ sys.A + sys.A.T @ X, X @ sys.B, sys.C.T],
            [sys.B.T @ X, -gamma**2 * np.eye(m), sys.D.T],
            [sys.C, sys.D, -np.eye(p)],
        ])
        blocks.append(LmiBlock.from_affine(X, ">", "X", eps))
    else:
        L = Affine.constant(np.block([[-gamma**2 * np.eye(m), sys.D.T], [sys.D, -np.eye(p)]]), 0)
    blocks.append(LmiBlock.from_affine(L, "<", "bounded-real", eps))
    return LmiProblem(vs.dim, np.zeros(vs.dim), blocks, vs, name="bounded-real")


def mingain_analysis_lmi(sys: StateSpace, nu: float, eps: float = EPS) -> LmiProblem:
    """Minimum-gain feasibility problem: feasible implies ``|G|_- >= nu``."""
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    n, m = sys.n, sys.m
    vs = VarSpace([("X", (n, n), True)])
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    blocks = []
    if n:
        X = vs["X"]
        L = _block([
            [X @ A + A.T @ X - C.T @ C, X @ B - C.T @ D, np.zeros((n, m))],
            [B.T @ X - D.T @ C, -D.T @ D, nu * np.eye(m)],
            [np.zeros((m, n)), nu * np.eye(m), -np.eye(m)],
        ])
        blocks.append(LmiBlock.from_affine(X, ">=", "X", eps))
    else:
        L = Affine.constant(np.block([[-D.T @ D, nu * np.eye(m)], [nu * np.eye(m), -np.eye(m)]]), 0)
    blocks.append(LmiBlock.from_affine(L, "<", "minimum-gain", eps))
    return LmiProblem(vs.dim, np.zeros(vs.dim), blocks, vs, name="minimum-gain")


def is_feasible(prob: LmiProblem, opts: SolverOptions | None = None) -> bool:
    return feasibility_phase1(prob, opts)[0]


# --- synthesis -------------------------------------------------------------


@dataclass
class SlackVars:
    """Slacks of the minimum-gain block: ``Xs`` (pz x mj), ``Ys`` and ``Zs`` (pz x n)."""

    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray

    @classmethod
    def initial(cls, pz: int, mj: int, n: int) -> "SlackVars":
        return cls(np.eye(pz, mj), np.zeros((pz, n)), np.zeros((pz, n)))

    def scaled(self, a: float) -> "SlackVars":
        return SlackVars(a * self.X, a * self.Y, a * self.Z)

    def as_dict(self):
        return {"Xs": self.X, "Ys": self.Y, "Zs": self.Z}


def synthesis_varspace(P: GeneralizedPlant, shared_lyapunov: bool = True) -> VarSpace:
    """``X1, Y1, An, Bn, Cn, Dn, nu2``; with ``shared_lyapunov=False`` the
    minimum-gain block gets its own pair ``X1n, Y1n``."""
    n = P.n
    vs = VarSpace([
        ("X1", (n, n), True), ("Y1", (n, n), True),
        ("An", (n, n)), ("Bn", (n, P.py)), ("Cn", (P.mu, n)), ("Dn", (P.mu, P.py)),
        ("nu2", (1, 1)),
    ])
    if not shared_lyapunov:
        vs.add("X1n", (n, n), True)
        vs.add("Y1n", (n, n), True)
    return vs


def slack_varspace(Pj: GeneralizedPlant) -> VarSpace:
    return VarSpace([("Xs", (Pj.pz, Pj.mw)), ("Ys", (Pj.pz, Pj.n)), ("Zs", (Pj.pz, Pj.n)),
                     ("nu2", (1, 1))])


def _check_shapes(Pj, X1, Y1, An, Bn, Cn, Dn):
    n = Pj.n
    want = {"X1": (n, n), "Y1": (n, n), "An": (n, n), "Bn": (n, Pj.py),
            "Cn": (Pj.mu, n), "Dn": (Pj.mu, Pj.py)}
    for name, val in zip(want, (X1, Y1, An, Bn, Cn, Dn)):
        if np.shape(val) != want[name] and getattr(val, "shape", None) != want[name]:
            raise DimensionMismatch(f"{name} has shape {np.shape(val)}, expected {want[name]}")


def m_block(Pj: GeneralizedPlant, X1, Y1, An, Bn, Cn, Dn, gamma):
    """Maximum-gain synthesis matrix for channel ``Pj`` (``< 0`` certifies ``gamma``)."""
    _check_shapes(Pj, X1, Y1, An, Bn, Cn, Dn)
    A, B1, B2, C1, C2 = Pj.A, Pj.B1, Pj.B2, Pj.C1, Pj.C2
    D11, D12, D21 = Pj.D11, Pj.D12, Pj.D21
    m, p = B1.shape[1], C1.shape[0]
    M11 = A @ Y1 + Y1 @ A.T + B2 @ Cn + Cn.T @ B2.T
    M12 = A + An.T + B2 @ Dn @ C2
    M13 = B1 + B2 @ Dn @ D21
    M14 = Y1 @ C1.T + Cn.T @ D12.T
    M22 = X1 @ A + A.T @ X1 + Bn @ C2 + C2.T @ Bn.T
    M23 = X1 @ B1 + Bn @ D21
    M24 = C1.T + C2.T @ Dn.T @ D12.T
    M33 = -gamma**2 * np.eye(m)
    M34 = D11.T + D21.T @ Dn.T @ D12.T
    M44 = -np.eye(p)
    return _block([
        [M11, M12, M13, M14],
        [M12.T, M22, M23, M24],
        [M13.T, M23.T, M33, M34],
        [M14.T, M24.T, M34.T, M44],
    ])


def n_block(Pj: GeneralizedPlant, X1, Y1, An, Bn, Cn, Dn, nu2, Xs, Ys, Zs):
    """Minimum-gain synthesis matrix for channel ``Pj`` (``< 0`` certifies ``sqrt(nu2)``)."""
    _check_shapes(Pj, X1, Y1, An, Bn, Cn, Dn)
    A, B1, B2, C1, C2 = Pj.A, Pj.B1, Pj.B2, Pj.C1, Pj.C2
    D11, D12, D21 = Pj.D11, Pj.D12, Pj.D21
    m, p = B1.shape[1], C1.shape[0]
    # closed-loop output map in transformed coordinates and its feedthrough
    c1 = C1 @ Y1 + D12 @ Cn
    c2 = C1 + D12 @ Dn @ C2
    dd = D11 + D12 @ Dn @ D21
    N11 = A @ Y1 + B2 @ Cn + Y1 @ A.T + Cn.T @ B2.T - c1.T @ Ys - Ys.T @ c1
    N12 = A + An.T + B2 @ Dn @ C2 - c1.T @ Zs - Ys.T @ c2
    N13 = B1 + B2 @ Dn @ D21 - Ys.T @ dd - c1.T @ Xs
    N14 = Ys.T
    N22 = X1 @ A + Bn @ C2 + A.T @ X1 + C2.T @ Bn.T - c2.T @ Zs - Zs.T @ c2
    N23 = X1 @ B1 + Bn @ D21 - Zs.T @ dd - c2.T @ Xs
    N24 = Zs.T
    N33 = _scaled_eye(nu2, m) - Xs.T @ dd - dd.T @ Xs
    N34 = Xs.T
    N44 = -np.eye(p)
    return _block([
        [N11, N12, N13, N14],
        [N12.T, N22, N23, N24],
        [N13.T, N23.T, N33, N34],
        [N14.T, N24.T, N34.T, N44],
    ])


def build_M_lmi(Pj: GeneralizedPlant, vs: VarSpace, gamma: float, eps: float = EPS,
                lyapunov=("X1", "Y1")) -> LmiBlock:
    X1, Y1 = vs[lyapunov[0]], vs[lyapunov[1]]
    expr = m_block(Pj, X1, Y1, vs["An"], vs["Bn"], vs["Cn"], vs["Dn"], gamma)
    return LmiBlock.from_affine(expr, "<", "M", eps)


def build_N_bmi_fixed_slack(Pj: GeneralizedPlant, vs: VarSpace, slack: SlackVars,
                            eps: float = EPS, lyapunov=("X1", "Y1")) -> LmiBlock:
    """Minimum-gain block, affine in the filter variables and ``nu2``."""
    X1, Y1 = vs[lyapunov[0]], vs[lyapunov[1]]
    expr = n_block(Pj, X1, Y1, vs["An"], vs["Bn"], vs["Cn"], vs["Dn"], vs["nu2"],
                   slack.X, slack.Y, slack.Z)
    return LmiBlock.from_affine(expr, "<", "N", eps)


def build_N_bmi_fixed_vars(Pj: GeneralizedPlant, values: dict, svs: VarSpace,
                           eps: float = EPS, lyapunov=("X1", "Y1")) -> LmiBlock:
    """Minimum-gain block, affine in the slacks and ``nu2`` for fixed filter variables."""
    v = values
    expr = n_block(Pj, v[lyapunov[0]], v[lyapunov[1]], v["An"], v["Bn"], v["Cn"], v["Dn"],
                   svs["nu2"], svs["Xs"], svs["Ys"], svs["Zs"])
    return LmiBlock.from_affine(expr, "<", "N", eps)


def build_coupling_lmi(vs: VarSpace, eps: float = EPS, lyapunov=("X1", "Y1")) -> LmiBlock:
    X1, Y1 = vs[lyapunov[0]], vs[lyapunov[1]]
    n = X1.shape[0]
    expr = bmat([[X1, np.eye(n)], [np.eye(n), Y1]], vs.dim)
    return LmiBlock.from_affine(expr, ">", "coupling", eps)
