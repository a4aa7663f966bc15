"""Partitioned generalized plant, LFT closure and channel selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IllPosedLoop, ImproperEntry, UnknownChannel
from .lti import RationalTF, StateSpace, balance, realize_matrix, tf_arith

WELL_POSED_TOL = 1e-10


def _blk(M, r, c):
    if M is None:
        return np.zeros((r, c))
    M = np.array(M, dtype=float)
    if M.size == 0 and r * c == 0:
        return np.zeros((r, c))
    if M.size != r * c:
        raise DimensionMismatch(f"block of size {M.size} does not fit {r}x{c}")
    return M.reshape(r, c)


@dataclass(frozen=True, eq=False)
class GeneralizedPlant:
    """Plant ``P: [w; u] -> [z; y]`` with realization

    ::

        [ A  | B1   B2  ]
        [ C1 | D11  D12 ]
        [ C2 | D21  D22 ]

    ``w_channels`` and ``z_channels`` map labels to ``(start, stop)`` slices.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    D22: np.ndarray
    w_channels: dict = field(default_factory=dict)
    z_channels: dict = field(default_factory=dict)

    def __post_init__(self):
        D11 = np.atleast_2d(np.array(self.D11, dtype=float))
        D22 = np.atleast_2d(np.array(self.D22, dtype=float))
        pz, mw = D11.shape
        py, mu = D22.shape
        A = np.array(self.A, dtype=float)
        n = 0 if A.size == 0 else A.shape[0]
        mats = {
            "A": _blk(A, n, n), "B1": _blk(self.B1, n, mw), "B2": _blk(self.B2, n, mu),
            "C1": _blk(self.C1, pz, n), "C2": _blk(self.C2, py, n),
            "D11": D11, "D12": _blk(self.D12, pz, mu), "D21": _blk(self.D21, py, mw), "D22": D22,
        }
        for k, M in mats.items():
            M = M.copy()
            M.setflags(write=False)
            object.__setattr__(self, k, M)
        for labels, width in ((self.w_channels, mw), (self.z_channels, pz)):
            covered = np.zeros(width, dtype=int)
            for name, (a, b) in labels.items():
                if not 0 <= a < b <= width:
                    raise DimensionMismatch(f"channel {name!r} = [{a}, {b}) outside [0, {width})")
                covered[a:b] += 1
            if np.any(covered > 1):
                raise DimensionMismatch("channel slices overlap")
        object.__setattr__(self, "w_channels", dict(self.w_channels))
        object.__setattr__(self, "z_channels", dict(self.z_channels))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def mw(self):
        return self.B1.shape[1]

    @property
    def mu(self):
        return self.B2.shape[1]

    @property
    def pz(self):
        return self.C1.shape[0]

    @property
    def py(self):
        return self.C2.shape[0]

    @classmethod
    def from_statespace(cls, sys: StateSpace, mw: int, pz: int, w_channels=None, z_channels=None):
        """Split a realization with inputs ``[w; u]`` and outputs ``[z; y]``."""
        if not (0 <= mw <= sys.m and 0 <= pz <= sys.p):
            raise DimensionMismatch("partition exceeds system dimensions")
        return cls(sys.A, sys.B[:, :mw], sys.B[:, mw:], sys.C[:pz], sys.C[pz:],
                   sys.D[:pz, :mw], sys.D[:pz, mw:], sys.D[pz:, :mw], sys.D[pz:, mw:],
                   w_channels or {}, z_channels or {})

    def to_statespace(self) -> StateSpace:
        return StateSpace(self.A, np.hstack([self.B1, self.B2]), np.vstack([self.C1, self.C2]),
                          np.block([[self.D11, self.D12], [self.D21, self.D22]]))

    def w_slice(self, label) -> slice:
        try:
            a, b = self.w_channels[label]
        except KeyError:
            raise UnknownChannel(f"no input channel labelled {label!r}") from None
        return slice(a, b)

    def selector(self, w_label, z_label=None) -> "ChannelSelector":
        """Selector isolating input channel ``w_label`` (and output ``z_label``)."""
        sl = self.w_slice(w_label)
        R = np.eye(self.mw)[:, sl]
        if z_label is None:
            L = np.eye(self.pz)
        else:
            try:
                a, b = self.z_channels[z_label]
            except KeyError:
                raise UnknownChannel(f"no output channel labelled {z_label!r}") from None
            L = np.eye(self.pz)[a:b]
        return ChannelSelector(L, R)


@dataclass(frozen=True, eq=False)
class ChannelSelector:
    """Output and input selection ``T_j = L T R``."""

    L: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        L = np.atleast_2d(np.array(self.L, dtype=float))
        R = np.atleast_2d(np.array(self.R, dtype=float))
        if np.linalg.matrix_rank(L) != L.shape[0]:
            raise ValueError("L must have full row rank")
        if np.linalg.matrix_rank(R) != R.shape[1]:
            raise ValueError("R must have full column rank")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "R", R)


def select_channel(P: GeneralizedPlant, sel: ChannelSelector) -> GeneralizedPlant:
    L, R = sel.L, sel.R
    if L.shape[1] != P.pz or R.shape[0] != P.mw:
        raise DimensionMismatch(
            f"selector ({L.shape}, {R.shape}) does not match pz={P.pz}, mw={P.mw}")
    return GeneralizedPlant(P.A, P.B1 @ R, P.B2, L @ P.C1, P.C2,
                            L @ P.D11 @ R, L @ P.D12, P.D21 @ R, P.D22)


def _check_well_posed(D22, Dc):
    M = np.eye(D22.shape[0]) - D22 @ Dc
    if M.size == 0:
        return M
    scale = max(1.0, np.linalg.norm(D22, 2) * np.linalg.norm(Dc, 2))
    if abs(np.linalg.det(M)) <= WELL_POSED_TOL * scale ** M.shape[0]:
        raise IllPosedLoop("I - D22 Dc is singular: the loop is not well posed")
    return M


def close_loop(P: GeneralizedPlant, Q: StateSpace) -> StateSpace:
    """Lower LFT ``F_l(P, Q)`` with closed-loop state ``[x; x_c]``."""
    if Q.m != P.py or Q.p != P.mu:
        raise DimensionMismatch(f"filter is {Q.p}x{Q.m}, plant needs {P.mu}x{P.py}")
    Ac, Bc, Cc, Dc = Q.A, Q.B, Q.C, Q.D
    Dbar = np.linalg.inv(_check_well_posed(P.D22, Dc))
    DcDb = Dc @ Dbar
    E = np.eye(P.mu) + DcDb @ P.D22
    A = np.block([
        [P.A + P.B2 @ DcDb @ P.C2, P.B2 @ E @ Cc],
        [Bc @ Dbar @ P.C2, Ac + Bc @ Dbar @ P.D22 @ Cc],
    ])
    B = np.vstack([P.B1 + P.B2 @ DcDb @ P.D21, Bc @ Dbar @ P.D21])
    C = np.hstack([P.C1 + P.D12 @ DcDb @ P.C2, P.D12 @ E @ Cc])
    D = P.D11 + P.D12 @ DcDb @ P.D21
    return StateSpace(A, B, C, D)


def build_fdi_plant(G: RationalTF, C: RationalTF, Gd: RationalTF, Gf: RationalTF,
                    balanced: bool = True) -> GeneralizedPlant:
    """Generalized plant of a feedback loop with weighted disturbance and actuator fault.

    The loop is ``y = G (u + f) + d``, ``u = -C y``, with ``d = Gd d~`` and
    ``f = Gf f~``. Inputs are ``w = [d~; f~]`` and the filter output ``u~``,
    outputs are ``z = u~`` (the residual) and ``y~ = [y; u]``. Every entry is
    formed at the rational level first so an improper controller is allowed
    as long as the composed entries are proper.
    """
    one = RationalTF([1.0])
    S_O = tf_arith(one, tf_arith(G, C, "mul"), "feedback")
    SI_C = tf_arith(C, G, "feedback")
    entries = {
        "S_O*G_d": tf_arith(S_O, Gd, "mul"),
        "S_O*G*G_f": tf_arith(tf_arith(S_O, G, "mul"), Gf, "mul"),
        "-S_I*C*G_d": -tf_arith(SI_C, Gd, "mul"),
        "-S_I*C*G*G_f": -tf_arith(tf_arith(SI_C, G, "mul"), Gf, "mul"),
    }
    for name, e in entries.items():
        if not e.is_proper:
            raise ImproperEntry(name, f"plant entry {name} is improper "
                                      f"(relative degree {e.relative_degree}); "
                                      "choose weights that make it proper")
    P21 = realize_matrix([[entries["S_O*G_d"], entries["S_O*G*G_f"]],
                          [entries["-S_I*C*G_d"], entries["-S_I*C*G*G_f"]]])
    if balanced and P21.n:
        P21 = balance(P21)
    n = P21.n
    return GeneralizedPlant(
        A=P21.A, B1=P21.B, B2=np.zeros((n, 1)),
        C1=np.zeros((1, n)), C2=P21.C,
        D11=np.zeros((1, 2)), D12=np.ones((1, 1)), D21=P21.D, D22=np.zeros((2, 1)),
        w_channels={"d": (0, 1), "f": (1, 2)}, z_channels={"residual": (0, 1)},
    )


@dataclass(frozen=True)
class FeasibilityDiagnostic:
    ok: bool
    message: str

    def __bool__(self):
        return self.ok


def check_hminus_feasibility(P: GeneralizedPlant, fault_channel="f") -> FeasibilityDiagnostic:
    """Check that some proper filter can give the fault channel a nonzero H-minus index.

    At high frequency every closed-loop channel tends to its feedthrough
    ``D11_f + D12 Dc D21_f``; if that matrix cannot reach full column rank
    for any ``Dc`` the index is structurally zero.
    """
    sl = P.w_slice(fault_channel)
    D11f = P.D11[:, sl]
    D21f = P.D21[:, sl]
    mf = D11f.shape[1]
    if P.pz < mf:
        return FeasibilityDiagnostic(False, f"fault channel {fault_channel!r} has {mf} inputs but "
                                            f"only {P.pz} residual outputs: H-minus index is zero")
    rng = np.random.default_rng(0)
    best = np.linalg.matrix_rank(D11f, tol=1e-10 * max(1.0, np.abs(D11f).max()))
    for _ in range(4):
        Dc = rng.standard_normal((P.mu, P.py))
        M = D11f + P.D12 @ Dc @ D21f
        best = max(best, np.linalg.matrix_rank(M, tol=1e-10 * max(1.0, np.abs(M).max())))
    if best >= mf:
        return FeasibilityDiagnostic(True, f"fault channel {fault_channel!r}: feedthrough can reach "
                                           "full column rank")
    if not np.any(D11f) and not (np.any(P.D12) and np.any(D21f)):
        why = "the fault channel is strictly proper (feedthrough D11_f + D12 Dc D21_f is identically zero)"
    else:
        why = (f"the fault feedthrough D11_f + D12 Dc D21_f has rank at most {best} < {mf} "
               "for every Dc")
    return FeasibilityDiagnostic(False, f"H-minus index of channel {fault_channel!r} is structurally "
                                        f"zero: {why}; shape the fault weight so the channel is biproper")


def shaped_bound(weight: RationalTF, level: float, omegas) -> np.ndarray:
    """``level / |W(jw)|``: the frequency-wise bound implied by a weighted gain bound."""
    return level / np.abs(weight(1j * np.asarray(omegas, dtype=float)))
