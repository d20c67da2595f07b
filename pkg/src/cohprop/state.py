"""Superpositions of multimode coherent products and their exact algebra.

A state is stored as a coefficient vector ``coeffs`` (N,) and an amplitude
matrix ``amps`` (N, m); row k holds the coherent amplitudes of branch k.
Coefficients are not renormalized by any operation here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, ValidationError


def _log_overlap(a, b):
    """log <a|b> for broadcastable coherent amplitudes (single mode)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    d = a - b
    # real part -|a-b|^2/2 is exact; imaginary part Im(conj(a) b)
    return -0.5 * (d.real ** 2 + d.imag ** 2) + 1j * (a.real * b.imag - a.imag * b.real)


def coherent_overlap(a: complex, b: complex) -> complex:
    """<a|b> = exp(-|a|^2/2 - |b|^2/2 + conj(a) b)."""
    return complex(np.exp(_log_overlap(a, b)))


def product_overlap(u, v) -> complex:
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape:
        raise DimensionError(f"amplitude rows differ in length: {u.shape} vs {v.shape}")
    return complex(np.exp(_log_overlap(u, v).sum()))


@dataclass(frozen=True, eq=False)
class CoherentSuperposition:
    coeffs: np.ndarray
    amps: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).reshape(-1)
        a = np.array(self.amps, dtype=complex)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2:
            raise DimensionError("amps must be an N x m matrix")
        if a.shape[0] != c.shape[0]:
            raise DimensionError(f"{c.shape[0]} coefficients for {a.shape[0]} amplitude rows")
        if a.shape[1] < 1:
            raise DimensionError("need at least one mode")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a))):
            raise ValidationError("non-finite coefficient or amplitude")
        c.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "amps", a)

    @property
    def num_modes(self) -> int:
        return self.amps.shape[1]

    @property
    def num_branches(self) -> int:
        return self.amps.shape[0]

    def __len__(self):
        return self.num_branches

    @classmethod
    def vacuum(cls, m: int) -> "CoherentSuperposition":
        return cls(np.ones(1), np.zeros((1, m)))

    @classmethod
    def coherent(cls, alpha) -> "CoherentSuperposition":
        alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
        return cls(np.ones(1), alpha[None, :])

    @classmethod
    def cat(cls, alpha, sign=1, m=1, normalize=True) -> "CoherentSuperposition":
        """|alpha> + sign |-alpha> on the first mode, vacuum elsewhere."""
        amps = np.zeros((2, m), dtype=complex)
        amps[0, 0], amps[1, 0] = alpha, -alpha
        s = cls(np.array([1.0, sign], dtype=complex), amps)
        return normalize_state(s) if normalize else s

    def coeff_norm(self) -> float:
        """sqrt(sum |C_k|^2), ignoring branch overlaps."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def to_dict(self) -> dict:
        c = self.coeffs
        a = self.amps
        return {
            "num_modes": self.num_modes,
            "coeffs": [[float(z.real), float(z.imag)] for z in c],
            "amps": [[[float(z.real), float(z.imag)] for z in row] for row in a],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoherentSuperposition":
        c = np.array(d["coeffs"], dtype=float).reshape(-1, 2)
        a = np.array(d["amps"], dtype=float)
        m = int(d["num_modes"])
        if a.ndim != 3 or a.shape[1] != m or a.shape[2] != 2:
            raise DimensionError("amps must be N x num_modes x [re, im]")
        return cls(c[:, 0] + 1j * c[:, 1], a[..., 0] + 1j * a[..., 1])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CoherentSuperposition":
        return cls.from_dict(json.loads(text))


def gram_matrix(A1, A2) -> np.ndarray:
    """Dense overlap matrix G[i, j] = <A1[i]|A2[j]> (small N only)."""
    A1 = np.asarray(A1, dtype=complex)
    A2 = np.asarray(A2, dtype=complex)
    return np.exp(_log_overlap(A1[:, None, :], A2[None, :, :]).sum(axis=2))


def inner_product(s1: CoherentSuperposition, s2: CoherentSuperposition) -> complex:
    """<s1|s2> summed over all branch pairs, O(N1 N2 m)."""
    if s1.num_modes != s2.num_modes:
        raise DimensionError(f"mode counts differ: {s1.num_modes} vs {s2.num_modes}")
    if s1 is s2:
        w = kernels.gram_matvec_self(s2.amps, s2.coeffs)
    else:
        w = kernels.gram_matvec(s1.amps, s2.amps, s2.coeffs)
    return complex(np.vdot(s1.coeffs, w))


def norm_squared(s: CoherentSuperposition) -> float:
    z = inner_product(s, s)
    assert abs(z.imag) <= 1e-10 * max(abs(z), 1e-300), f"self inner product not real: {z}"
    return max(z.real, 0.0)


def norm(s: CoherentSuperposition) -> float:
    return float(np.sqrt(norm_squared(s)))


def normalize_state(s: CoherentSuperposition) -> CoherentSuperposition:
    n = norm(s)
    if n == 0:
        raise ValidationError("cannot normalize a zero state")
    return CoherentSuperposition(s.coeffs / n, s.amps)


def merge_duplicates(s: CoherentSuperposition, tol: float = 0.0) -> CoherentSuperposition:
    """Merge rows whose amplitudes agree within ``tol`` (max-norm); coefficients add.

    Branch order follows first occurrence. With tol=0 only bitwise-equal rows
    merge. For tol > 0 each row joins the closest earlier anchor row within
    tol, otherwise it becomes an anchor itself.
    """
    if tol < 0:
        raise ValidationError("tol must be >= 0")
    a = s.amps
    n = a.shape[0]
    if n <= 1:
        return s
    if tol == 0:
        keys = np.ascontiguousarray(a + 0.0).view(np.dtype((np.void, a.dtype.itemsize * a.shape[1])))[:, 0]
        _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        label = first[inv.reshape(-1)]
    else:
        label = np.empty(n, dtype=np.int64)
        anchors = np.empty(n, dtype=np.int64)
        na = 0
        for i in range(n):
            if na:
                d = np.max(np.abs(a[anchors[:na]] - a[i]), axis=1)
                j = int(np.argmin(d))
                if d[j] < tol:
                    label[i] = anchors[j]
                    continue
            anchors[na] = i
            na += 1
            label[i] = i
    reps = np.unique(label)
    pos = np.searchsorted(reps, label)
    c = np.zeros(reps.size, dtype=complex)
    np.add.at(c, pos, s.coeffs)
    return CoherentSuperposition(c, a[reps])
