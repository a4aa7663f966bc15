"""Dense continuous-time LTI algebra.

State-space realizations, SISO rational transfer functions, interconnection,
frequency response, and the two gain measures used throughout the package:
the H-infinity norm (largest singular value, supremum over frequency) and the
H-minus index (smallest singular value, infimum over frequency).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .errors import (
    DegenerateFraction,
    DimensionMismatch,
    ImproperTransfer,
    SingularResolvent,
    UnstableSystem,
)

STABILITY_MARGIN = 1e-9
CANCEL_TOL = 1e-7


def _as2d(M, rows=None, cols=None):
    M = np.array(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(1, -1) if rows in (None, 1) else M.reshape(-1, 1)
    if M.size == 0:
        M = M.reshape(rows or 0, cols or 0)
    return M


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Real state-space realization ``(A, B, C, D)``.

    ``n = 0`` is a static gain. Arrays are copied and marked read-only.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _as2d(self.D)
        p, m = D.shape
        A = np.array(self.A, dtype=float)
        n = 0 if A.size == 0 else A.shape[0]
        B = np.array(self.B, dtype=float)
        C = np.array(self.C, dtype=float)
        if A.size != n * n or (n and (B.size != n * m or C.size != p * n)):
            raise DimensionMismatch("inconsistent realization")
        A = A.reshape(n, n)
        B = B.reshape(n, m) if n else np.zeros((0, m))
        C = C.reshape(p, n) if n else np.zeros((p, 0))
        for name, M in zip("ABCD", (A, B, C, D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @classmethod
    def static(cls, D) -> "StateSpace":
        D = _as2d(D)
        return cls(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[0]

    @property
    def shape(self):
        return (self.p, self.m)

    def __call__(self, omega):
        return freq_response(self, omega)

    def __neg__(self):
        return negate(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, negate(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        # self * other: other acts first
        return series(other, self)

    def __rmul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return NotImplemented

    def __repr__(self):
        return f"StateSpace(n={self.n}, m={self.m}, p={self.p})"


def _poly_trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 0:
        return np.zeros(1)
    scale_ = np.max(np.abs(c))
    if scale_ == 0.0:
        return np.zeros(1)
    nz = np.nonzero(np.abs(c) > 1e-14 * scale_)[0]
    return c[nz[0]:].copy()


@dataclass(frozen=True, eq=False)
class RationalTF:
    """SISO rational function ``num(s)/den(s)``, coefficients in descending powers.

    The denominator is normalized to be monic. Improper fractions are allowed.
    """

    num: np.ndarray
    den: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        num = _poly_trim(self.num)
        den = _poly_trim(self.den)
        if not np.any(den):
            raise DegenerateFraction("zero denominator")
        lead = den[0]
        num, den = num / lead, den / lead
        if not np.any(num):
            num, den = np.zeros(1), np.ones(1)
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.num)

    @property
    def relative_degree(self) -> int:
        if self.is_zero:
            return 10**9
        return (len(self.den) - 1) - (len(self.num) - 1)

    @property
    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    def poles(self):
        return np.roots(self.den)

    def zeros(self):
        return np.roots(self.num)

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def __add__(self, other):
        return tf_arith(self, _tf(other), "add")

    __radd__ = __add__

    def __sub__(self, other):
        return tf_arith(self, -_tf(other), "add")

    def __rsub__(self, other):
        return tf_arith(_tf(other), -self, "add")

    def __mul__(self, other):
        return tf_arith(self, _tf(other), "mul")

    __rmul__ = __mul__

    def __neg__(self):
        return RationalTF(-self.num, self.den)

    def __truediv__(self, other):
        return tf_arith(self, tf_arith(_tf(other), None, "inv"), "mul")

    def __repr__(self):
        return f"RationalTF(num={self.num.tolist()}, den={self.den.tolist()})"


def _tf(x) -> RationalTF:
    return x if isinstance(x, RationalTF) else RationalTF([float(x)])


def cancel(num, den, tol=CANCEL_TOL):
    """Remove common roots of ``num`` and ``den``.

    Roots ``r1``, ``r2`` are paired when ``|r1 - r2| <= tol * (1 + |r1|)``.
    Returns the reduced ``(num, den)``; untouched inputs are returned as-is.
    """
    num = _poly_trim(num)
    den = _poly_trim(den)
    if len(num) < 2 or len(den) < 2 or not np.any(num):
        return num, den
    zs = list(np.roots(num))
    ps = list(np.roots(den))
    kept_z = []
    removed = 0
    for z in zs:
        dist = [abs(z - p) for p in ps]
        if dist:
            i = int(np.argmin(dist))
            if dist[i] <= tol * (1 + abs(z)):
                ps.pop(i)
                removed += 1
                continue
        kept_z.append(z)
    if removed == 0:
        return num, den
    gain = num[0] / den[0]
    new_num = gain * np.real(np.poly(kept_z)) if kept_z else np.array([gain])
    new_den = np.real(np.poly(ps)) if ps else np.ones(1)
    return new_num, new_den


def tf_arith(a: RationalTF, b: RationalTF | None, op: str) -> RationalTF:
    """Exact polynomial arithmetic on SISO rational functions.

    ``op`` is one of ``"add"``, ``"mul"``, ``"inv"`` (``b`` ignored) or
    ``"feedback"``, the negative-feedback loop ``a / (1 + a b)``. The result is
    reduced by common-root cancellation.
    """
    if op == "add":
        num = np.polyadd(np.polymul(a.num, b.den), np.polymul(b.num, a.den))
        den = np.polymul(a.den, b.den)
    elif op == "mul":
        num = np.polymul(a.num, b.num)
        den = np.polymul(a.den, b.den)
    elif op == "inv":
        if a.is_zero:
            raise DegenerateFraction("inverse of the zero function")
        num, den = a.den, a.num
    elif op == "feedback":
        num = np.polymul(a.num, b.den)
        den = np.polyadd(np.polymul(a.den, b.den), np.polymul(a.num, b.num))
    else:
        raise ValueError(f"unknown operation {op!r}")
    num = _poly_trim(num)
    den = _poly_trim(den)
    if not np.any(den):
        raise DegenerateFraction(f"{op}: denominator vanishes identically")
    num, den = cancel(num, den)
    return RationalTF(num, den)


def tf_to_ss(tf: RationalTF) -> StateSpace:
    """Controllable-canonical realization of a proper SISO transfer function."""
    if not tf.is_proper:
        raise ImproperTransfer(f"degree of numerator exceeds denominator in {tf!r}")
    den = tf.den
    n = len(den) - 1
    num = np.concatenate([np.zeros(n + 1 - len(tf.num)), tf.num])
    d = num[0]
    if n == 0:
        return StateSpace.static([[d]])
    r = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    return StateSpace(A, B, r.reshape(1, n), [[d]])


def _root_groups(roots):
    """Group roots into conjugate pairs and pairs of reals (at most one single)."""
    roots = np.asarray(roots, dtype=complex)
    cplx = sorted([r for r in roots if r.imag > 1e-12 * (1 + abs(r))], key=lambda r: (abs(r), r.imag))
    real = sorted([r.real for r in roots if abs(r.imag) <= 1e-12 * (1 + abs(r))])
    groups = [np.real(np.poly([r, np.conj(r)])) for r in cplx]
    for i in range(0, len(real) - 1, 2):
        groups.append(np.real(np.poly(real[i:i + 2])))
    if len(real) % 2:
        groups.append(np.array([1.0, -real[-1]]))
    return groups


def tf_to_ss_sections(tf: RationalTF) -> StateSpace:
    """Realization as a cascade of first- and second-order sections.

    Better conditioned than the companion form when coefficients span many
    orders of magnitude.
    """
    if not tf.is_proper:
        raise ImproperTransfer(f"degree of numerator exceeds denominator in {tf!r}")
    if len(tf.den) <= 3 or tf.is_zero:
        return tf_to_ss(tf)
    zeros = tf.zeros() if len(tf.num) > 1 else np.zeros(0)
    return zpk_to_ss_sections(zeros, tf.poles(), tf.num[0])


def zpk_to_ss_sections(zeros, poles, gain: float) -> StateSpace:
    """Section cascade realizing ``gain * prod(s - z) / prod(s - p)``.

    Complex roots must come in conjugate pairs and ``len(zeros) <= len(poles)``.
    """
    zeros = np.asarray(zeros, dtype=complex)
    poles = np.asarray(poles, dtype=complex)
    if len(zeros) > len(poles):
        raise ImproperTransfer("more zeros than poles")
    if len(poles) == 0:
        return StateSpace.static([[float(gain)]])
    pole_secs = sorted(_root_groups(poles), key=len, reverse=True)
    zero_secs = sorted(_root_groups(zeros), key=len, reverse=True)
    nums = [np.ones(1) for _ in pole_secs]
    free = list(range(len(pole_secs)))
    for z in zero_secs:
        for k in free:
            if len(pole_secs[k]) >= len(z):
                nums[k] = z
                free.remove(k)
                break
    nums[0] = gain * nums[0]
    sys = None
    for num, den in zip(nums, pole_secs):
        sec = tf_to_ss(RationalTF(num, den))
        sys = sec if sys is None else series(sys, sec)
    return sys


def zpk_cancel(zeros, poles, tol=CANCEL_TOL):
    """Drop zero/pole pairs closer than ``tol * (1 + |z|)``; returns ``(zeros, poles)``."""
    ps = list(np.asarray(poles, dtype=complex))
    kept = []
    for z in np.asarray(zeros, dtype=complex):
        if ps:
            d = np.abs(np.array(ps) - z)
            i = int(np.argmin(d))
            if d[i] <= tol * (1 + abs(z)):
                ps.pop(i)
                continue
        kept.append(z)
    return np.array(kept, dtype=complex), np.array(ps, dtype=complex)


def realize_matrix(entries, tol: float = 1e-7) -> StateSpace:
    """Minimal realization of a matrix of proper SISO transfers.

    Each entry is realized on its own, the blocks are assembled, and the
    uncontrollable and unobservable parts are removed.
    """
    rows = []
    for row in entries:
        sys_row = None
        for e in row:
            s = tf_to_ss_sections(_tf(e))
            sys_row = s if sys_row is None else horzcat(sys_row, s)
        rows.append(sys_row)
    sys = rows[0]
    for r in rows[1:]:
        sys = vertcat(sys, r)
    return minreal(sys, tol)


def ss_to_zpk(sys: StateSpace, tol: float = 1e-7):
    """Invariant zeros, poles and gain of a SISO realization.

    The realization is made minimal first (``minreal`` with ``tol``) so that
    uncontrollable or unobservable modes do not appear as root pairs. Returns
    ``(zeros, poles, k)`` with ``G(s) = k prod(s - z) / prod(s - p)``.
    """
    if sys.shape != (1, 1):
        raise DimensionMismatch("a SISO system is required")
    if sys.n:
        sys = minreal(sys, tol)
    if sys.n == 0:
        return np.zeros(0, dtype=complex), np.zeros(0, dtype=complex), float(sys.D[0, 0])
    n = sys.n
    M = np.block([[sys.A, sys.B], [sys.C, sys.D]])
    N = np.zeros_like(M)
    N[:n, :n] = np.eye(n)
    with np.errstate(all="ignore"):
        z = scipy.linalg.eigvals(M, N)
    z = z[np.isfinite(z) & (np.abs(z) < 1e8 * (1.0 + np.abs(sys.A).max()))]
    p = np.linalg.eigvals(sys.A)
    # gain from one evaluation away from every root
    s0 = 1j * (1.0 + 2.0 * max(np.abs(np.concatenate([z, p]))))
    k = freq_response(sys, s0.imag)[0, 0] * np.prod(s0 - p) / np.prod(s0 - z)
    return z, p, float(k.real)


def ss_to_tf(sys: StateSpace, tol: float = 1e-7) -> RationalTF:
    """SISO transfer function of a realization (see :func:`ss_to_zpk`)."""
    z, p, k = ss_to_zpk(sys, tol)
    num = np.real(np.poly(z)) if len(z) else np.ones(1)
    return RationalTF(k * num, np.real(np.poly(p)) if len(p) else np.ones(1))


# --- interconnection -------------------------------------------------------


def series(a: StateSpace, b: StateSpace) -> StateSpace:
    """``b`` after ``a``: transfer ``b(s) a(s)``."""
    if a.p != b.m:
        raise DimensionMismatch(f"series: {a.p} outputs feed {b.m} inputs")
    A = np.block([[a.A, np.zeros((a.n, b.n))], [b.B @ a.C, b.A]])
    B = np.vstack([a.B, b.B @ a.D])
    C = np.hstack([b.D @ a.C, b.C])
    return StateSpace(A, B, C, b.D @ a.D)


def add(a: StateSpace, b: StateSpace) -> StateSpace:
    if a.shape != b.shape:
        raise DimensionMismatch(f"add: shapes {a.shape} and {b.shape}")
    A = scipy.linalg.block_diag(a.A, b.A)
    return StateSpace(A, np.vstack([a.B, b.B]), np.hstack([a.C, b.C]), a.D + b.D)


def negate(a: StateSpace) -> StateSpace:
    return StateSpace(a.A, a.B, -a.C, -a.D)


def scale(a: StateSpace, alpha: float) -> StateSpace:
    return StateSpace(a.A, a.B, alpha * a.C, alpha * a.D)


def vertcat(a: StateSpace, b: StateSpace) -> StateSpace:
    """Stack outputs; both systems share the input."""
    if a.m != b.m:
        raise DimensionMismatch(f"vertcat: {a.m} vs {b.m} inputs")
    A = scipy.linalg.block_diag(a.A, b.A)
    C = scipy.linalg.block_diag(a.C, b.C).reshape(a.p + b.p, a.n + b.n)
    return StateSpace(A, np.vstack([a.B, b.B]), C, np.vstack([a.D, b.D]))


def horzcat(a: StateSpace, b: StateSpace) -> StateSpace:
    """Stack inputs; outputs are summed."""
    if a.p != b.p:
        raise DimensionMismatch(f"horzcat: {a.p} vs {b.p} outputs")
    A = scipy.linalg.block_diag(a.A, b.A)
    B = scipy.linalg.block_diag(a.B, b.B).reshape(a.n + b.n, a.m + b.m)
    return StateSpace(A, B, np.hstack([a.C, b.C]), np.hstack([a.D, b.D]))


def similarity(sys: StateSpace, T) -> StateSpace:
    """Change of state coordinates ``x = T z``."""
    Ti = np.linalg.inv(T)
    return StateSpace(Ti @ sys.A @ T, Ti @ sys.B, sys.C @ T, sys.D)


def _krylov_basis(A, B, tol):
    n = A.shape[0]
    V = np.zeros((n, 0))
    W = B
    thresh = tol * max(np.linalg.norm(B, 2), 1e-300)
    while W.size and V.shape[1] < n:
        W = W - V @ (V.T @ W)
        W = W - V @ (V.T @ W)
        if not W.size:
            break
        U, s, _ = np.linalg.svd(W, full_matrices=False)
        r = int(np.sum(s > thresh))
        if r == 0:
            break
        U = U[:, :r]
        V = np.hstack([V, U])
        W = A @ U
        thresh = tol * max(np.linalg.norm(A, 2), 1e-300)
    return V


def _psd_factor(W):
    """``L`` with ``L L^T = W`` for a symmetric positive semidefinite ``W``."""
    lam, U = np.linalg.eigh((W + W.T) / 2)
    return U * np.sqrt(np.clip(lam, 0.0, None))


def _gramian_factors(sys: StateSpace):
    Wc = scipy.linalg.solve_continuous_lyapunov(sys.A, -sys.B @ sys.B.T)
    Wo = scipy.linalg.solve_continuous_lyapunov(sys.A.T, -sys.C.T @ sys.C)
    return _psd_factor(Wc), _psd_factor(Wo)


def _balanced_projection(sys: StateSpace, rel_tol: float | None):
    Lc, Lo = _gramian_factors(sys)
    U, hsv, Vt = np.linalg.svd(Lo.T @ Lc)
    cut = np.finfo(float).eps if rel_tol is None else rel_tol
    r = int(np.sum(hsv > cut * hsv[0])) if hsv[0] > 0 else 0
    if r == 0:
        return StateSpace.static(sys.D), hsv
    sq = np.sqrt(hsv[:r])
    T = Lc @ Vt[:r].T / sq
    Ti = (U[:, :r] / sq).T @ Lo.T
    return StateSpace(Ti @ sys.A @ T, Ti @ sys.B, sys.C @ T, sys.D), hsv


def minreal(sys: StateSpace, tol: float = 1e-7) -> StateSpace:
    """Remove uncontrollable and unobservable states.

    Stable systems use the Gramian square-root method and drop only the
    numerically zero Hankel singular values (below ``tol`` relative to the
    largest), which is an exact reduction up to round-off. Unstable systems
    fall back to orthogonal Krylov projections.
    """
    if sys.n == 0:
        return sys
    if is_hurwitz(sys):
        return _balanced_projection(sys, tol)[0]
    _, T = scipy.linalg.matrix_balance(sys.A, permute=False, separate=False)
    s = similarity(sys, T)
    V = _krylov_basis(s.A, s.B, tol)
    s = StateSpace(V.T @ s.A @ V, V.T @ s.B, s.C @ V, s.D)
    if s.n == 0:
        return StateSpace.static(s.D)
    W = _krylov_basis(s.A.T, s.C.T, tol)
    s = StateSpace(W.T @ s.A @ W, W.T @ s.B, s.C @ W, s.D)
    return s if s.n else StateSpace.static(s.D)


def balance(sys: StateSpace) -> StateSpace:
    """Gramian-balanced realization of a stable minimal system (exact similarity)."""
    if sys.n == 0:
        return sys
    if not is_hurwitz(sys):
        raise UnstableSystem("balancing requires a Hurwitz A")
    return _balanced_projection(sys, None)[0]


def hankel_singular_values(sys: StateSpace) -> np.ndarray:
    if sys.n == 0:
        return np.zeros(0)
    return _balanced_projection(sys, None)[1]


# --- frequency domain ------------------------------------------------------


def freq_response(sys: StateSpace, omega: float) -> np.ndarray:
    """``C (jwI - A)^-1 B + D`` at a single angular frequency."""
    if sys.n == 0:
        return sys.D.astype(complex)
    M = 1j * omega * np.eye(sys.n) - sys.A
    with warnings.catch_warnings():
        # singularity is detected below and raised as SingularResolvent
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    udiag = np.abs(np.diag(lu))
    if udiag.min() <= 1e-13 * max(1.0, np.abs(M).max()):
        raise SingularResolvent(f"jwI - A is singular at w = {omega:g}")
    return sys.C @ scipy.linalg.lu_solve((lu, piv), sys.B.astype(complex)) + sys.D


def freq_response_grid(sys: StateSpace, omegas) -> np.ndarray:
    """Frequency response stacked along the first axis, shape ``(k, p, m)``."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if sys.n == 0:
        return np.broadcast_to(sys.D.astype(complex), (len(omegas), sys.p, sys.m)).copy()
    # Hessenberg form keeps each solve cheap and well conditioned
    H, Q = scipy.linalg.hessenberg(sys.A, calc_q=True)
    Bq = Q.T @ sys.B
    Cq = sys.C @ Q
    out = np.empty((len(omegas), sys.p, sys.m), dtype=complex)
    eye = np.eye(sys.n)
    for k, w in enumerate(omegas):
        M = 1j * w * eye - H
        try:
            X = np.linalg.solve(M, Bq)
        except np.linalg.LinAlgError:
            raise SingularResolvent(f"jwI - A is singular at w = {w:g}") from None
        if not np.all(np.isfinite(X)):
            raise SingularResolvent(f"jwI - A is singular at w = {w:g}")
        out[k] = Cq @ X + sys.D
    return out


def _sv_min(G: np.ndarray) -> np.ndarray:
    """Operator-sense smallest gain: zero whenever outputs < inputs."""
    p, m = G.shape[-2:]
    if p < m or m == 0:
        return np.zeros(G.shape[:-2])
    return np.linalg.svd(G, compute_uv=False)[..., -1]


def _sv_max(G: np.ndarray) -> np.ndarray:
    if G.shape[-1] == 0 or G.shape[-2] == 0:
        return np.zeros(G.shape[:-2])
    return np.linalg.svd(G, compute_uv=False)[..., 0]


def sigma(sys: StateSpace, omegas) -> np.ndarray:
    """Singular values on a frequency grid, shape ``(k, min(p, m))``, descending."""
    return np.linalg.svd(freq_response_grid(sys, omegas), compute_uv=False)


@dataclass(frozen=True)
class FrequencyGrid:
    """Ascending grid of angular frequencies in rad/s."""

    points: np.ndarray
    decades: tuple = (-3.0, 4.0)
    density: int = 400

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or not np.all(np.isfinite(pts)) or np.any(pts < 0):
            raise ValueError("grid points must be finite and nonnegative")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly ascending")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def default(cls, lo=-3.0, hi=4.0, density=400) -> "FrequencyGrid":
        pts = np.concatenate([[0.0], np.logspace(lo, hi, density)])
        return cls(pts, (lo, hi), density)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _characteristic_frequencies(sys: StateSpace):
    """Magnitudes of poles and finite invariant zeros; sharp features sit near these."""
    freqs = list(np.abs(np.linalg.eigvals(sys.A))) if sys.n else []
    if sys.n and sys.p == sys.m:
        n = sys.n
        M = np.block([[sys.A, sys.B], [sys.C, sys.D]])
        N = np.zeros_like(M)
        N[:n, :n] = np.eye(n)
        with np.errstate(all="ignore"):
            z = scipy.linalg.eigvals(M, N)
        z = z[np.isfinite(z) & (np.abs(z) < 1e8)]
        freqs.extend(np.abs(z))
        freqs.extend(np.abs(z.imag))
    return np.array([f for f in freqs if f > 0])


def _sweep_grid(sys: StateSpace, grid: FrequencyGrid | None):
    grid = grid or FrequencyGrid.default()
    extra = _characteristic_frequencies(sys)
    ws = np.unique(np.concatenate([grid.points, extra]))
    # merge near-duplicates so neighbours always bracket a local extremum
    keep = np.concatenate([[True], np.diff(ws) > 1e-9 * np.maximum(ws[1:], 1.0)])
    return ws[keep]


def is_hurwitz(sys: StateSpace, margin: float = STABILITY_MARGIN) -> bool:
    if sys.n == 0:
        return True
    return bool(np.max(np.linalg.eigvals(sys.A).real) < -margin)


def _refine(f, w_lo, w_hi, w_mid, ratio=1.001):
    """Bounded minimization of ``f`` over ``log w`` in ``[w_lo, w_hi]``."""
    lo = np.log(max(w_lo, 1e-12))
    hi = np.log(w_hi)
    if hi - lo <= np.log(ratio):
        return w_mid, f(w_mid)
    res = minimize_scalar(lambda t: f(np.exp(t)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10, "maxiter": 500})
    w = float(np.exp(res.x))
    fw = float(res.fun)
    fm = f(w_mid)
    return (w, fw) if fw < fm else (w_mid, fm)


def hminus_index(sys: StateSpace, tol: float = 1e-6, grid: FrequencyGrid | None = None,
                 return_frequency: bool = False):
    """Infimum over frequency of the smallest singular value.

    Grid sweep plus local refinement around the lowest local minima, and the
    explicit high-frequency limit ``sigma_min(D)``.
    """
    if not is_hurwitz(sys):
        raise UnstableSystem("H-minus index requires a Hurwitz A")
    d_lim = float(_sv_min(sys.D))
    if sys.p < sys.m:
        return (0.0, np.inf) if return_frequency else 0.0
    if sys.n == 0:
        return (d_lim, np.inf) if return_frequency else d_lim
    ws = _sweep_grid(sys, grid)
    vals = _sv_min(freq_response_grid(sys, ws))

    def f(w):
        return float(_sv_min(freq_response(sys, w)))

    best_w, best = np.inf, d_lim
    # local minima of the sampled curve, lowest first
    idx = [i for i in range(len(ws))
           if (i == 0 or vals[i] <= vals[i - 1]) and (i == len(ws) - 1 or vals[i] <= vals[i + 1])]
    idx = sorted(idx, key=lambda i: vals[i])[:6]
    for i in idx:
        lo = ws[max(i - 1, 0)]
        hi = ws[min(i + 1, len(ws) - 1)]
        w, v = _refine(f, lo if lo > 0 else ws[min(1, len(ws) - 1)] * 1e-3, hi, ws[i]) if i > 0 else (ws[i], vals[i])
        if v < best:
            best, best_w = v, w
    if vals.min() < best:
        best, best_w = float(vals.min()), float(ws[np.argmin(vals)])
    return (best, best_w) if return_frequency else best


def _hamiltonian_imag_freqs(sys: StateSpace, gamma: float):
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    R = gamma**2 * np.eye(sys.m) - D.T @ D
    Ri = np.linalg.inv(R)
    Ae = A + B @ Ri @ D.T @ C
    H = np.block([
        [Ae, B @ Ri @ B.T],
        [-C.T @ (np.eye(sys.p) + D @ Ri @ D.T) @ C, -Ae.T],
    ])
    ev = np.linalg.eigvals(H)
    on_axis = ev[np.abs(ev.real) <= 1e-8 * max(1.0, np.linalg.norm(H, 1))]
    return np.sort(np.abs(on_axis.imag))


def hinf_norm(sys: StateSpace, tol: float = 1e-6, grid: FrequencyGrid | None = None,
              return_frequency: bool = False):
    """H-infinity norm by Hamiltonian imaginary-axis bracketing.

    A frequency sweep gives the initial lower bound; each test level that
    still yields imaginary-axis Hamiltonian eigenvalues lifts the lower bound
    through evaluations between those crossing frequencies.
    """
    if not is_hurwitz(sys):
        raise UnstableSystem("H-infinity norm requires a Hurwitz A")
    d_max = float(_sv_max(sys.D))
    if sys.n == 0:
        return (d_max, np.inf) if return_frequency else d_max
    ws = _sweep_grid(sys, grid)
    vals = _sv_max(freq_response_grid(sys, ws))
    i = int(np.argmax(vals))
    lb, w_best = float(vals[i]), float(ws[i])
    if d_max >= lb:
        lb, w_best = d_max, np.inf
    if lb == 0.0:
        return (0.0, 0.0) if return_frequency else 0.0
    for _ in range(100):
        gamma = (1 + 2 * tol) * lb
        w = _hamiltonian_imag_freqs(sys, gamma)
        if len(w) == 0:
            break
        pts = np.concatenate([w, np.sqrt(w[:-1] * w[1:]) if len(w) > 1 else [], (w[:-1] + w[1:]) / 2])
        pts = pts[np.isfinite(pts)]
        sv = _sv_max(freq_response_grid(sys, pts))
        j = int(np.argmax(sv))
        if sv[j] <= lb * (1 + tol / 10):
            break
        lb, w_best = float(sv[j]), float(pts[j])
    val = lb * (1 + tol)
    return (val, w_best) if return_frequency else val
