"""Affine matrix expressions over a flat decision vector.

An :class:`Affine` is ``const + sum_k x[k] * lin[k]``. Products with constant
matrices, transposes, sums and block assembly stay affine, which lets the
matrix-inequality builders be written exactly like the formulas they encode
while producing the coefficient data an SDP solver needs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Affine:
    __array_ufunc__ = None  # ndarray op Affine defers to the reflected method

    def __init__(self, const, lin):
        self.const = np.asarray(const, dtype=float)
        self.lin = np.asarray(lin, dtype=float)
        if self.const.ndim != 2 or self.lin.shape[1:] != self.const.shape:
            raise ValueError("inconsistent affine expression")

    @classmethod
    def constant(cls, M, dim: int) -> "Affine":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M, np.zeros((dim,) + M.shape))

    @property
    def dim(self) -> int:
        return self.lin.shape[0]

    @property
    def shape(self):
        return self.const.shape

    @property
    def T(self) -> "Affine":
        return Affine(self.const.T, self.lin.transpose(0, 2, 1))

    def _coerce(self, other) -> "Affine":
        if isinstance(other, Affine):
            if other.dim != self.dim:
                raise ValueError("affine expressions live in different variable spaces")
            return other
        other = np.asarray(other, dtype=float)
        if other.ndim < 2:
            other = np.broadcast_to(other, self.shape)
        return Affine.constant(other, self.dim)

    def __add__(self, other):
        o = self._coerce(other)
        return Affine(self.const + o.const, self.lin + o.lin)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, -self.lin)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, a):
        if isinstance(a, Affine) or np.ndim(a) != 0:
            raise TypeError("only scalar multiplication is affine; use @ for constant matrices")
        return Affine(a * self.const, a * self.lin)

    __rmul__ = __mul__

    def __matmul__(self, M):
        if isinstance(M, Affine):
            raise TypeError("product of two affine expressions is not affine")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(self.const @ M, self.lin @ M)

    def __rmatmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(M @ self.const, np.matmul(M, self.lin))

    def __call__(self, x) -> np.ndarray:
        return self.const + np.tensordot(np.asarray(x, dtype=float), self.lin, axes=1)

    def __repr__(self):
        return f"Affine(shape={self.shape}, dim={self.dim})"


def bmat(rows, dim: int) -> Affine:
    """Block assembly of affine expressions and constant arrays."""
    consts, lins = [], []
    for row in rows:
        rc, rl = [], []
        for blk in row:
            a = blk if isinstance(blk, Affine) else Affine.constant(blk, dim)
            rc.append(a.const)
            rl.append(a.lin)
        consts.append(np.hstack(rc))
        lins.append(np.concatenate(rl, axis=2))
    return Affine(np.vstack(consts), np.concatenate(lins, axis=1))


@dataclass
class _Var:
    name: str
    shape: tuple
    symmetric: bool
    offset: int
    size: int


class VarSpace:
    """Named matrix variables laid out in one flat real vector.

    Symmetric variables store their upper triangle only.
    """

    def __init__(self, variables=()):
        self._vars: dict[str, _Var] = {}
        self.dim = 0
        for item in variables:
            self.add(*item)

    def add(self, name: str, shape, symmetric: bool = False):
        if name in self._vars:
            raise ValueError(f"variable {name!r} already declared")
        shape = tuple(int(s) for s in (shape if np.ndim(shape) else (shape, shape)))
        if symmetric and shape[0] != shape[1]:
            raise ValueError("symmetric variables must be square")
        size = shape[0] * (shape[0] + 1) // 2 if symmetric else shape[0] * shape[1]
        self._vars[name] = _Var(name, shape, symmetric, self.dim, size)
        self.dim += size
        return self

    def __contains__(self, name):
        return name in self._vars

    def __iter__(self):
        return iter(self._vars)

    def info(self, name) -> _Var:
        return self._vars[name]

    def index_map(self, name) -> np.ndarray:
        """Flat index of every matrix entry of ``name`` (symmetric partners share)."""
        v = self._vars[name]
        r, c = v.shape
        idx = np.empty((r, c), dtype=int)
        if v.symmetric:
            iu = np.triu_indices(r)
            idx[iu] = v.offset + np.arange(v.size)
            idx[(iu[1], iu[0])] = v.offset + np.arange(v.size)
        else:
            idx[:] = v.offset + np.arange(v.size).reshape(r, c)
        return idx

    def __getitem__(self, name) -> Affine:
        v = self._vars[name]
        idx = self.index_map(name)
        lin = np.zeros((self.dim,) + v.shape)
        r, c = np.indices(v.shape)
        lin[idx, r, c] = 1.0
        return Affine(np.zeros(v.shape), lin)

    def unpack(self, x) -> dict:
        x = np.asarray(x, dtype=float)
        out = {}
        for name, v in self._vars.items():
            M = x[self.index_map(name)]
            out[name] = (M + M.T) / 2 if v.symmetric else M
        return out

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self.dim)
        for name, v in self._vars.items():
            if name not in values:
                continue
            M = np.asarray(values[name], dtype=float).reshape(v.shape)
            if v.symmetric:
                M = (M + M.T) / 2
                x[v.offset:v.offset + v.size] = M[np.triu_indices(v.shape[0])]
            else:
                x[v.offset:v.offset + v.size] = M.ravel()
        return x


@dataclass(eq=False)
class LmiBlock:
    """Affine symmetric matrix inequality ``F(x) = F0 + sum x_k F_k``.

    ``sense`` is ``"<"`` (negative definite), ``">"`` (positive definite),
    ``"<="`` or ``">="``. Strict senses are enforced with the absolute
    margin ``eps``, so a point strictly feasible for one slicing of a
    bilinear block stays strictly feasible for the other.
    """

    constant: np.ndarray
    coeffs: dict
    sense: str = "<"
    name: str = ""
    eps: float = 1e-7
    dim: int = field(default=0)

    def __post_init__(self):
        if self.sense not in ("<", ">", "<=", ">="):
            raise ValueError(f"unknown sense {self.sense!r}")
        self.constant = np.asarray(self.constant, dtype=float)

    @classmethod
    def from_affine(cls, expr: Affine, sense: str = "<", name: str = "", eps: float = 1e-7):
        const = (expr.const + expr.const.T) / 2
        lin = (expr.lin + expr.lin.transpose(0, 2, 1)) / 2
        nz = np.nonzero(np.any(lin != 0, axis=(1, 2)))[0]
        return cls(const, {int(k): lin[k] for k in nz}, sense, name, eps, expr.dim)

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    @property
    def strict(self) -> bool:
        return len(self.sense) == 1

    def __call__(self, x) -> np.ndarray:
        F = self.constant.copy()
        for k, Fk in self.coeffs.items():
            F += x[k] * Fk
        return F

    def dense(self, dim: int):
        """``(F0, Fk)`` with ``Fk`` of shape ``(dim, s, s)``."""
        lin = np.zeros((dim, self.size, self.size))
        for k, Fk in self.coeffs.items():
            lin[k] = Fk
        return self.constant, lin

    def margin(self, x) -> float:
        """Signed distance to the cone boundary: positive when satisfied."""
        ev = np.linalg.eigvalsh(self(x))
        return float(-ev[-1]) if self.sense.startswith("<") else float(ev[0])
