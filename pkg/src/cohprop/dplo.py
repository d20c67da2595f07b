"""Displaced passive linear optics: H = sum K_jk a_j^dag a_k + sum (eta_j a_j^dag + h.c.).

Such a layer maps a coherent product to a single coherent product,
alpha -> S alpha + gamma, so it never changes the branch count.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .state import CoherentSuperposition, inner_product, norm

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DploLayer:
    K: np.ndarray
    eta: np.ndarray
    t: float

    def __post_init__(self):
        K = np.array(self.K, dtype=complex)
        if K.ndim == 0:
            K = K.reshape(1, 1)
        eta = np.atleast_1d(np.array(self.eta, dtype=complex))
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise DimensionError("K must be square")
        if eta.shape != (K.shape[0],):
            raise DimensionError(f"eta has shape {eta.shape}, expected ({K.shape[0]},)")
        if not np.all(np.isfinite(K)) or not np.all(np.isfinite(eta)):
            raise ValidationError("non-finite K or eta")
        if np.max(np.abs(K - K.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValidationError("K is not Hermitian")
        t = float(self.t)
        if not np.isfinite(t) or t < 0:
            raise ValidationError(f"duration must be finite and >= 0, got {t}")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "t", t)

    @property
    def num_modes(self):
        return self.K.shape[0]

    def to_dict(self):
        return {
            "K": [[[float(z.real), float(z.imag)] for z in row] for row in self.K],
            "eta": [[float(z.real), float(z.imag)] for z in self.eta],
            "t": self.t,
        }

    @classmethod
    def from_dict(cls, d):
        K = np.array(d["K"], dtype=float)
        eta = np.array(d["eta"], dtype=float).reshape(-1, 2)
        return cls(K[..., 0] + 1j * K[..., 1], eta[:, 0] + 1j * eta[:, 1], d["t"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class DploCompiled:
    S: np.ndarray
    gamma: np.ndarray

    @property
    def num_modes(self):
        return self.S.shape[0]


def _phi(lam, t):
    # (exp(-i lam t) - 1)/lam written as -i t exp(-i lam t/2) sinc(lam t/2);
    # smooth through lam = 0 where it equals -i t
    x = lam * t
    return -1j * t * np.exp(-0.5j * x) * np.sinc(x / (2 * np.pi))


def compile_layer(layer: DploLayer) -> DploCompiled:
    """S = exp(-iKt) and gamma = V f(Lambda) V^dag eta from one eigendecomposition."""
    lam, V = np.linalg.eigh(layer.K)
    t = layer.t
    S = (V * np.exp(-1j * lam * t)) @ V.conj().T
    f = _phi(lam, t)
    f = np.where(np.abs(lam) < 1e-12, -1j * t, f)
    gamma = V @ (f * (V.conj().T @ layer.eta))
    return DploCompiled(S, gamma)


# short alias matching the operation name used elsewhere
compile = compile_layer  # noqa: A001


def apply(compiled: DploCompiled, s: CoherentSuperposition) -> CoherentSuperposition:
    """alpha_k -> S alpha_k + gamma; C_k picks up exp(i Im(gamma . conj(S alpha_k)))."""
    if s.num_modes != compiled.num_modes:
        raise DimensionError(f"layer acts on {compiled.num_modes} modes, state has {s.num_modes}")
    beta = s.amps @ compiled.S.T
    g = compiled.gamma
    phase = np.exp(1j * (beta.conj() @ g).imag)
    return CoherentSuperposition(s.coeffs * phase, beta + g)


def norm_preservation_check(compiled: DploCompiled, s: CoherentSuperposition) -> float:
    return abs(norm(apply(compiled, s)) - norm(s))


def state_distance(s1: CoherentSuperposition, s2: CoherentSuperposition) -> float:
    """||s1 - s2|| from inner products."""
    d2 = (inner_product(s1, s1) + inner_product(s2, s2) - 2 * inner_product(s1, s2).real).real
    return float(np.sqrt(max(d2, 0.0)))
