"""Mixed minimum-gain / maximum-gain filter synthesis.

The driver fixes the disturbance bound ``gamma0`` and maximizes the
fault-sensitivity level ``nu**2`` by alternating two LMI problems:

1. slacks fixed: optimize the transformed filter variables and ``nu**2``
   subject to the maximum-gain block, the minimum-gain block and the coupling
   block;
2. filter variables fixed: optimize the slacks and ``nu**2`` subject to the
   minimum-gain block.

The loop stops once consecutive step-1 values of ``nu**2`` differ by at most
``mu``. The filter is then recovered through a matrix completion and the
inverse change of variables, and the closed loop is measured by frequency
sweeps.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionMismatch, ImproperScaling, InfeasibleAtStep1,
                     NonconvergedIteration, SingularCompletion, SingularRecovery,
                     UnstableLoop, UnstableScaling)
from .lmi import (EPS, SlackVars, build_coupling_lmi, build_M_lmi, build_N_bmi_fixed_slack,
                  build_N_bmi_fixed_vars, slack_varspace, synthesis_varspace)
from .lti import (FrequencyGrid, RationalTF, StateSpace, freq_response_grid, hinf_norm,
                  hminus_index, is_hurwitz, series, ss_to_zpk, zpk_cancel, zpk_to_ss_sections)
from .plant import (GeneralizedPlant, _check_well_posed, check_hminus_feasibility, close_loop,
                    select_channel)
from .sdp import LmiProblem, SolverOptions, Status, solve

log = logging.getLogger(__name__)

RECOVERY_TOL = 1e-10
COMPLETION_TOL = 1e-10


# --- change of variables ---------------------------------------------------


@dataclass(frozen=True)
class TransformedFilterVars:
    """Filter matrices after the change of variables that makes the loop affine."""

    Ac2: np.ndarray
    Bc2: np.ndarray
    Cc2: np.ndarray
    Dc2: np.ndarray

    def __post_init__(self):
        for k in ("Ac2", "Bc2", "Cc2", "Dc2"):
            M = np.atleast_2d(np.array(getattr(self, k), dtype=float))
            M.setflags(write=False)
            object.__setattr__(self, k, M)
        n = self.Ac2.shape[0]
        if self.Ac2.shape != (n, n) or self.Bc2.shape[0] != n or self.Cc2.shape[1] != n \
                or self.Dc2.shape != (self.Cc2.shape[0], self.Bc2.shape[1]):
            # static filters have empty state blocks
            if not (self.Ac2.size == 0 and self.Bc2.size == 0 and self.Cc2.size == 0):
                raise DimensionMismatch("inconsistent transformed filter matrices")

    def as_tuple(self):
        return self.Ac2, self.Bc2, self.Cc2, self.Dc2


def _static_blocks(Ac, Bc, Cc, Dc):
    Dc = np.atleast_2d(np.asarray(Dc, dtype=float))
    mu, py = Dc.shape
    Ac = np.asarray(Ac, dtype=float)
    n = 0 if Ac.size == 0 else Ac.shape[0]
    return (Ac.reshape(n, n), np.asarray(Bc, dtype=float).reshape(n, py),
            np.asarray(Cc, dtype=float).reshape(mu, n), Dc)


def forward_cov(Ac, Bc, Cc, Dc, D22) -> TransformedFilterVars:
    """``(Ac, Bc, Cc, Dc) -> (Ac2, Bc2, Cc2, Dc2)`` with ``Dbar = (I - D22 Dc)^-1``.

    Raises :class:`~fdshape.errors.IllPosedLoop` if ``I - D22 Dc`` is singular.
    """
    Ac, Bc, Cc, Dc = _static_blocks(Ac, Bc, Cc, Dc)
    D22 = np.atleast_2d(np.asarray(D22, dtype=float))
    Dbar = np.linalg.inv(_check_well_posed(D22, Dc))
    return TransformedFilterVars(
        Ac + Bc @ Dbar @ D22 @ Cc,
        Bc @ Dbar,
        (np.eye(Dc.shape[0]) + Dc @ Dbar @ D22) @ Cc,
        Dc @ Dbar,
    )


def reverse_cov(t: TransformedFilterVars, D22):
    """Inverse of :func:`forward_cov`; returns ``(Ac, Bc, Cc, Dc)``.

    Raises :class:`~fdshape.errors.SingularRecovery` when ``I + Dc2 D22`` is
    singular to within ``RECOVERY_TOL`` (relative smallest singular value).
    """
    Ac2, Bc2, Cc2, Dc2 = _static_blocks(*t.as_tuple())
    D22 = np.atleast_2d(np.asarray(D22, dtype=float))
    E = np.eye(Dc2.shape[0]) + Dc2 @ D22
    F = np.eye(D22.shape[0]) + D22 @ Dc2
    sv = np.linalg.svd(E, compute_uv=False)
    if sv.size and sv[-1] <= RECOVERY_TOL * max(1.0, sv[0]):
        raise SingularRecovery("I + Dc2 D22 is singular: the filter cannot be recovered")
    Ei = np.linalg.inv(E)
    return (Ac2 - Bc2 @ D22 @ Ei @ Cc2, Bc2 @ np.linalg.inv(F), Ei @ Cc2, Ei @ Dc2)


# --- completion and reconstruction -----------------------------------------


@dataclass(frozen=True)
class MatrixCompletion:
    """``X2``, ``Y2`` with ``X2 Y2^T = I - X1 Y1``."""

    X2: np.ndarray
    Y2: np.ndarray

    @classmethod
    def from_lyapunov(cls, X1, Y1) -> "MatrixCompletion":
        """The completion ``Y2 = I``, ``X2 = I - X1 Y1``."""
        X1 = np.asarray(X1, dtype=float)
        Y1 = np.asarray(Y1, dtype=float)
        n = X1.shape[0]
        X2 = np.eye(n) - X1 @ Y1
        if n:
            sv = np.linalg.svd(X2, compute_uv=False)
            if sv[-1] <= COMPLETION_TOL * max(1.0, sv[0]):
                raise SingularCompletion("I - X1 Y1 is singular; the coupling block is not strict")
        return cls(X2, np.eye(n))

    def residual(self, X1, Y1) -> float:
        """Relative error of ``X2 Y2^T = I - X1 Y1``."""
        target = np.eye(len(X1)) - np.asarray(X1) @ np.asarray(Y1)
        return float(np.linalg.norm(self.X2 @ self.Y2.T - target) / max(1.0, np.linalg.norm(target)))


def complete_and_extract(values: dict, P: GeneralizedPlant, lyapunov=("X1", "Y1")):
    """Recover the transformed filter matrices from a step-1 solution.

    Returns ``(TransformedFilterVars, MatrixCompletion)``.
    """
    X1, Y1 = values[lyapunov[0]], values[lyapunov[1]]
    An, Bn, Cn, Dn = (np.asarray(values[k], dtype=float) for k in ("An", "Bn", "Cn", "Dn"))
    comp = MatrixCompletion.from_lyapunov(X1, Y1)
    n, mu, py = P.n, P.mu, P.py
    left = np.block([[comp.X2, X1 @ P.B2], [np.zeros((mu, n)), np.eye(mu)]])
    right = np.block([[comp.Y2.T, np.zeros((n, py))], [P.C2 @ Y1, np.eye(py)]])
    K = np.block([[An - X1 @ P.A @ Y1, Bn], [Cn, Dn]])
    T = np.linalg.solve(left, K) @ np.linalg.inv(right)
    t = TransformedFilterVars(T[:n, :n], T[:n, n:], T[n:, :n], T[n:, n:])
    return t, comp


def lmi_vars_from_filter(P: GeneralizedPlant, t: TransformedFilterVars, X1, Y1,
                         comp: MatrixCompletion | None = None) -> dict:
    """Forward map of :func:`complete_and_extract`: ``(An, Bn, Cn, Dn)`` for a given filter."""
    X1 = np.asarray(X1, dtype=float)
    Y1 = np.asarray(Y1, dtype=float)
    comp = comp or MatrixCompletion.from_lyapunov(X1, Y1)
    X2, Y2 = comp.X2, comp.Y2
    Ac2, Bc2, Cc2, Dc2 = t.as_tuple()
    A, B2, C2 = P.A, P.B2, P.C2
    An = (X1 @ A @ Y1 + X2 @ Bc2 @ C2 @ Y1 + X1 @ B2 @ Cc2 @ Y2.T + X2 @ Ac2 @ Y2.T
          + X1 @ B2 @ Dc2 @ C2 @ Y1)
    return {"X1": X1, "Y1": Y1, "An": An, "Bn": X2 @ Bc2 + X1 @ B2 @ Dc2,
            "Cn": Cc2 @ Y2.T + Dc2 @ C2 @ Y1, "Dn": Dc2.copy()}


def closed_loop_lyapunov(X1, Y1, comp: MatrixCompletion) -> np.ndarray:
    """Closed-loop Lyapunov matrix ``X`` with ``X Y_CL = [[I, X1], [0, X2^T]]``.

    ``Y_CL = [[Y1, I], [Y2^T, 0]]``; the state order matches
    :func:`~fdshape.plant.close_loop` with the reconstructed filter.
    """
    n = len(X1)
    Ycl = np.block([[Y1, np.eye(n)], [comp.Y2.T, np.zeros((n, n))]])
    Xcl_Ycl = np.block([[np.eye(n), X1], [np.zeros((n, n)), comp.X2.T]])
    X = np.linalg.solve(Ycl.T, Xcl_Ycl.T).T
    return (X + X.T) / 2


# --- measurement -----------------------------------------------------------


@dataclass
class VerificationReport:
    hinf_dist: float
    hminus_fault: float
    J: float
    omegas: np.ndarray
    sigma_max_dist: np.ndarray
    sigma_min_fault: np.ndarray
    dist_bound: np.ndarray | None = None
    fault_bound: np.ndarray | None = None
    peak_frequency: float = np.nan
    floor_frequency: float = np.nan


def _sub(sys: StateSpace, rows, cols) -> StateSpace:
    return StateSpace(sys.A, sys.B[:, cols], sys.C[rows], sys.D[rows][:, cols])


def verify(P: GeneralizedPlant, Q: StateSpace, fault_channel="f", dist_channel="d",
           residual_channel=None, omegas=None, weights=None, levels=None,
           hinf_tol=1e-6, hminus_tol=1e-6) -> VerificationReport:
    """Measure the closed loop ``F_l(P, Q)``.

    Parameters
    ----------
    weights : tuple of RationalTF, optional
        ``(Gd, Gf)``. With ``levels = (gamma, nu)`` the shaped bounds
        ``gamma / |Gd(jw)|`` and ``nu / |Gf(jw)|`` are returned as well.
    """
    T = close_loop(P, Q)
    if not is_hurwitz(T):
        raise UnstableLoop("closed loop F_l(P, Q) is not asymptotically stable")
    rows = slice(0, P.pz) if residual_channel is None else slice(*P.z_channels[residual_channel])
    Td = _sub(T, rows, P.w_slice(dist_channel))
    Tf = _sub(T, rows, P.w_slice(fault_channel))
    hd, wd = hinf_norm(Td, hinf_tol, return_frequency=True)
    hf, wf = hminus_index(Tf, hminus_tol, return_frequency=True)
    w = FrequencyGrid.default().points[1:] if omegas is None else np.asarray(omegas, dtype=float)
    sd = np.linalg.svd(freq_response_grid(Td, w), compute_uv=False)[:, 0]
    Gf = freq_response_grid(Tf, w)
    sf = (np.linalg.svd(Gf, compute_uv=False)[:, -1] if Tf.p >= Tf.m
          else np.zeros(len(w)))
    rep = VerificationReport(hd, hf, hf / hd if hd > 0 else (0.0 if hf == 0 else np.inf), w, sd, sf,
                             peak_frequency=wd, floor_frequency=wf)
    if weights is not None and levels is not None:
        Gd, Gf_w = weights
        gamma, nu = levels
        rep.dist_bound = gamma / np.abs(Gd(1j * w))
        rep.fault_bound = nu / np.abs(Gf_w(1j * w))
    return rep


# --- the alternating driver ------------------------------------------------


@dataclass(frozen=True)
class SynthesisConfig:
    """Options of :func:`synthesize`.

    ``step2_reading`` selects the step-2 constraint: ``"min-gain"`` (slacks
    optimized against the minimum-gain block, the default) or ``"max-gain"``
    (the literal alternative, in which the maximum-gain block carries no slack
    and step 2 leaves the slacks unchanged). ``radius`` bounds the Euclidean
    norm of the step-1 decision vector so the barrier has a minimizer.
    ``backend`` substitutes another SDP solver behind the
    :func:`~fdshape.sdp.solve` contract.
    """

    gamma0: float = 1.0
    mu: float = 1e-4
    max_outer_iters: int = 30
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(gap_tol=1e-7))
    shared_lyapunov: bool = True
    fault_channel: str = "f"
    dist_channel: str = "d"
    residual_channel: str | None = None
    step2_reading: str = "min-gain"
    radius: float = 1e3
    eps: float = EPS
    backend: object = None  # callable (LmiProblem, SolverOptions, x0) -> SdpSolution

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if self.step2_reading not in ("min-gain", "max-gain"):
            raise ValueError("step2_reading is 'min-gain' or 'max-gain'")


@dataclass
class IterateRecord:
    k: int
    nu2_step1: float
    nu2_step2: float
    seconds: float


@dataclass
class SynthesisResult:
    Q: StateSpace
    nu_certified: float
    gamma0: float
    history: list
    values: dict
    slack: SlackVars
    transformed: TransformedFilterVars
    completion: MatrixCompletion
    report: VerificationReport
    converged: bool
    tolerances: dict
    seconds: float = 0.0

    @property
    def nu_measured(self) -> float:
        return self.report.hminus_fault

    @property
    def hinf_measured(self) -> float:
        return self.report.hinf_dist

    @property
    def nu(self) -> float:
        """Reported level: the certificate, unless the sweep contradicts it."""
        if self.nu_measured < self.nu_certified * (1 - 1e-3):
            return self.nu_measured
        return self.nu_certified

    @property
    def J(self) -> float:
        return self.nu / self.gamma0

    @property
    def nu2_sequence(self):
        return [h.nu2_step1 for h in self.history]


def _channels(P: GeneralizedPlant, cfg: SynthesisConfig):
    Pd = select_channel(P, P.selector(cfg.dist_channel, cfg.residual_channel))
    Pf = select_channel(P, P.selector(cfg.fault_channel, cfg.residual_channel))
    return Pd, Pf


def _step1(Pd, Pf, P, cfg, slack, x0):
    vs = synthesis_varspace(P, cfg.shared_lyapunov)
    nl = ("X1", "Y1") if cfg.shared_lyapunov else ("X1n", "Y1n")
    blocks = [
        build_M_lmi(Pd, vs, cfg.gamma0, cfg.eps),
        build_N_bmi_fixed_slack(Pf, vs, slack, cfg.eps, lyapunov=nl),
        # the coupling block also forces X1 > 0 and Y1 > 0
        build_coupling_lmi(vs, cfg.eps),
    ]
    if not cfg.shared_lyapunov:
        blocks.append(build_coupling_lmi(vs, cfg.eps, lyapunov=nl))
    c = -vs.pack({"nu2": [[1.0]]})
    prob = LmiProblem(vs.dim, c, blocks, vs, radius=cfg.radius, name="step 1")
    return (cfg.backend or solve)(prob, cfg.solver, x0), vs


def _step2(Pf, values, cfg, slack, nu2_start, lyapunov):
    svs = slack_varspace(Pf)
    block = build_N_bmi_fixed_vars(Pf, values, svs, cfg.eps, lyapunov)
    c = -svs.pack({"nu2": [[1.0]]})
    prob = LmiProblem(svs.dim, c, [block], svs, name="step 2")
    x0 = svs.pack({**slack.as_dict(), "nu2": [[nu2_start]]})
    return (cfg.backend or solve)(prob, cfg.solver, x0)


def _tight_slack(Pf: GeneralizedPlant, v: dict, lyapunov) -> SlackVars:
    """Slacks at which the linearized min-gain term is exact for the fixed variables."""
    Y1 = v[lyapunov[1]]
    Cn, Dn = v["Cn"], v["Dn"]
    c1 = Pf.C1 @ Y1 + Pf.D12 @ Cn
    c2 = Pf.C1 + Pf.D12 @ Dn @ Pf.C2
    dd = Pf.D11 + Pf.D12 @ Dn @ Pf.D21
    return SlackVars(dd, c1, c2)


def _initial_slack_scale(Pf: GeneralizedPlant) -> float:
    """Smallest singular value of the fault-to-measurement feedthrough (1 if it vanishes)."""
    sv = np.linalg.svd(Pf.D21, compute_uv=False)
    s = float(sv[-1]) if sv.size and Pf.D21.shape[0] >= Pf.D21.shape[1] else 0.0
    return s if s > 0 else 1.0


def synthesize(P: GeneralizedPlant, cfg: SynthesisConfig | None = None,
               weights=None, callback=None) -> SynthesisResult:
    """Run the alternating synthesis and reconstruct the filter.

    Raises
    ------
    InfeasibleAtStep1
        No filter meets ``gamma0`` with a positive ``nu**2`` at the start.
    NonconvergedIteration
        ``max_outer_iters`` reached; the partial result is attached as
        ``exc.result``.
    """
    cfg = cfg or SynthesisConfig()
    t_start = time.perf_counter()
    diag = check_hminus_feasibility(P, cfg.fault_channel)
    if not diag:
        raise InfeasibleAtStep1(diag.message)
    Pd, Pf = _channels(P, cfg)
    nl = ("X1", "Y1") if cfg.shared_lyapunov else ("X1n", "Y1n")

    slack = SlackVars.initial(Pf.pz, Pf.mw, Pf.n)
    sol, vs = _step1(Pd, Pf, P, cfg, slack, None)
    if not sol.ok or sol.values["nu2"][0, 0] <= 0:
        alt = slack.scaled(_initial_slack_scale(Pf))
        log.info("step 1 failed with unit slacks (%s); retrying with scaled slacks", sol.status.value)
        sol2, vs = _step1(Pd, Pf, P, cfg, alt, None)
        if sol2.ok and sol2.values["nu2"][0, 0] > 0:
            sol, slack = sol2, alt
        else:
            if sol.status is Status.INFEASIBLE:
                why = f"no filter achieves the disturbance bound gamma0 = {cfg.gamma0:g}"
            elif sol.status is Status.OPTIMAL:
                why = "the best fault-sensitivity level nu^2 is not positive"
            else:
                why = f"the step-1 solver stopped with status {sol.status.value}"
            raise InfeasibleAtStep1(f"step 1 infeasible: {why}")

    history = []
    values, step1_slack = sol.values, slack
    nu2_prev = None
    converged = False
    for k in range(cfg.max_outer_iters):
        t0 = time.perf_counter()
        nu2 = float(values["nu2"][0, 0])
        # step 2
        if cfg.step2_reading == "min-gain":
            s2 = _step2(Pf, values, cfg, _tight_slack(Pf, values, nl), nu2, nl)
            if s2.ok or s2.status is Status.MAX_ITERATIONS:
                v2 = s2.values
                new_slack = SlackVars(v2["Xs"], v2["Ys"], v2["Zs"])
                nu2_s2 = float(v2["nu2"][0, 0])
            else:
                log.warning("step 2 returned %s; keeping the previous slacks", s2.status.value)
                new_slack, nu2_s2 = step1_slack, nu2
        else:
            new_slack, nu2_s2 = step1_slack, nu2
        history.append(IterateRecord(k, nu2, nu2_s2, 0.0))
        if nu2_prev is not None and abs(nu2 - nu2_prev) <= cfg.mu:
            history[-1].seconds = time.perf_counter() - t0
            converged = True
            break
        if k == cfg.max_outer_iters - 1:
            history[-1].seconds = time.perf_counter() - t0
            break
        nu2_prev = nu2
        # step 1 warm-started from the previous variables at the step-2 level
        x0 = vs.pack({**values, "nu2": [[min(nu2_s2, nu2) if cfg.step2_reading == "max-gain" else nu2_s2]]})
        s1, vs = _step1(Pd, Pf, P, cfg, new_slack, x0)
        history[-1].seconds = time.perf_counter() - t0
        if not s1.ok:
            log.warning("step 1 returned %s at iteration %d; stopping", s1.status.value, k + 1)
            break
        values, step1_slack = s1.values, new_slack
        if callback is not None:
            callback(history[-1])

    t, comp = complete_and_extract(values, P)
    Ac, Bc, Cc, Dc = reverse_cov(t, P.D22)
    Q = StateSpace(Ac, Bc, Cc, Dc)
    if not is_hurwitz(Q):
        log.warning("reconstructed filter is not Hurwitz")
    nu_cert = float(np.sqrt(max(float(values["nu2"][0, 0]), 0.0)))
    report = verify(P, Q, cfg.fault_channel, cfg.dist_channel, cfg.residual_channel,
                    weights=weights, levels=(cfg.gamma0, nu_cert))
    tolerances = {
        "eps": cfg.eps, "gap_tol": cfg.solver.gap_tol, "feas_tol": cfg.solver.feas_tol,
        "mu": cfg.mu, "radius": cfg.radius, "hinf_tol": 1e-6, "hminus_tol": 1e-6,
        "completion_tol": COMPLETION_TOL, "recovery_tol": RECOVERY_TOL,
    }
    res = SynthesisResult(Q, nu_cert, cfg.gamma0, history, values, step1_slack, t, comp,
                          report, converged, tolerances, time.perf_counter() - t_start)
    if not converged:
        raise NonconvergedIteration(
            f"|nu^2 change| stayed above mu = {cfg.mu:g} after {len(history)} iterations", res)
    return res


# --- post scaling ----------------------------------------------------------


def post_scale_update(P: GeneralizedPlant, Q: StateSpace, gamma0: float, Gd: RationalTF,
                      dist_channel="d", residual_channel=None) -> StateSpace:
    """``Q2 = (gamma0 Gd^-1 / T_ed) Q`` with ``T_ed`` the unweighted disturbance map.

    Afterwards ``|T_ed~(jw)| = gamma0`` at every frequency, so the
    disturbance bound is tight. The scaling is formed at the rational level
    and must be proper and stable.
    """
    if residual_channel is None and P.pz != 1:
        raise DimensionMismatch("post scaling needs a single residual output")
    sl = P.w_slice(dist_channel)
    if sl.stop - sl.start != 1 or Q.shape != (P.mu, P.py):
        raise DimensionMismatch("post scaling needs a SISO disturbance channel")
    T = close_loop(P, Q)
    rows = slice(0, 1) if residual_channel is None else slice(*P.z_channels[residual_channel])
    # factored form keeps the high-degree arithmetic exact up to root accuracy
    zw, pw, kw = ss_to_zpk(_sub(T, rows, sl))
    if kw == 0:
        raise ImproperScaling("disturbance channel is identically zero")
    zg, pg = Gd.zeros() if len(Gd.num) > 1 else np.zeros(0), Gd.poles()
    kg = Gd.num[0]
    # T_ed = T_ed~ / Gd
    zt, pt = zpk_cancel(np.concatenate([zw, pg]), np.concatenate([pw, zg]))
    kt = kw / kg
    # scaling = gamma / (Gd T_ed)
    zs, ps = zpk_cancel(np.concatenate([pg, pt]), np.concatenate([zg, zt]))
    ks = gamma0 / (kg * kt)
    if len(zs) > len(ps):
        raise ImproperScaling(f"scaling gamma Gd^-1 / T_ed is improper "
                              f"(relative degree {len(ps) - len(zs)})")
    if len(ps) and np.max(ps.real) >= 0:
        raise UnstableScaling("scaling gamma Gd^-1 / T_ed is unstable: T_ed has zeros in the "
                              "closed right half plane")
    Sss = zpk_to_ss_sections(zs, ps, ks)
    return series(Q, Sss)


def measure_scaled(P, Q, alpha: float, **kw) -> VerificationReport:
    """:func:`verify` for the filter ``alpha * Q``."""
    return verify(P, StateSpace(Q.A, Q.B, alpha * Q.C, alpha * Q.D), **kw)


__all__ = [
    "TransformedFilterVars", "forward_cov", "reverse_cov", "MatrixCompletion",
    "complete_and_extract", "lmi_vars_from_filter", "closed_loop_lyapunov", "VerificationReport", "verify",
    "SynthesisConfig", "SynthesisResult", "IterateRecord", "synthesize", "post_scale_update",
    "measure_scaled",
]
