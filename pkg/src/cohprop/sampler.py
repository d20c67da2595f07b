"""x-quadrature sampling from a superposition of Gaussian branches.

Independence Metropolis-Hastings: proposals come from the incoherent
mixture q(x) = sum_k w_k |psi_k(x)|^2 with w_k proportional to |c_k|^2
(branches normalized first), the target is |sum_k c_k psi_k(x)|^2.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import ValidationError
from .gaussian import (PhaseShift, lift_coherent,
                       log_overlap_quadratic)
from .state import CoherentSuperposition


@dataclass(frozen=True)
class SamplerConfig:
    eps_mixing: float = 1e-3
    n_shots: int = 1000
    thinning: int = 1
    seed: int = 0
    weight_rule: str = "coeff_squared"
    burn_in: int | None = None  # overrides the N ln(1/eps) rule

    def __post_init__(self):
        if not 0 < self.eps_mixing < 1:
            raise ValidationError("eps_mixing must lie in (0, 1)")
        if self.n_shots < 1 or self.thinning < 1:
            raise ValidationError("n_shots and thinning must be >= 1")
        if self.weight_rule not in ("coeff_squared", "CoeffSquared"):
            raise ValidationError("only the |c_k|^2 weight rule is supported")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValidationError("burn_in must be >= 0")

    def to_dict(self):
        return {"eps_mixing": self.eps_mixing, "n_shots": self.n_shots, "thinning": self.thinning,
                "seed": self.seed, "weight_rule": "coeff_squared", "burn_in": self.burn_in}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d.get("eps_mixing", 1e-3)), int(d.get("n_shots", 1000)),
                   int(d.get("thinning", 1)), int(d.get("seed", 0)),
                   d.get("weight_rule", "coeff_squared"), d.get("burn_in"))


@dataclass(eq=False)
class SampleBatch:
    outcomes: np.ndarray
    acceptance_rate: float
    burn_in_steps: int
    seed: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = self.outcomes.shape[1]
        w.writerow(["shot"] + [f"x_{k}" for k in range(m)])
        for i, row in enumerate(self.outcomes):
            w.writerow([i] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def meta(self) -> dict:
        return {"acceptance_rate": self.acceptance_rate, "burn_in_steps": self.burn_in_steps,
                "seed": self.seed, "n_shots": int(self.outcomes.shape[0])}

    def meta_json(self) -> str:
        return json.dumps(self.meta())


def make_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


class _Prepared:
    """Branches rescaled to unit norm with the norms moved into the coefficients."""

    def __init__(self, state):
        if isinstance(state, CoherentSuperposition):
            state = lift_coherent(state)
        if not np.any(state.coeffs != 0):
            raise ValidationError("all coefficients vanish")
        A, b, c = state.stacked()
        lnorm2 = log_overlap_quadratic(A, b, c, A, b, c).real
        self.A, self.b = A, b
        self.c = c - 0.5 * lnorm2
        with np.errstate(divide="ignore"):
            self.logcoef = np.log(state.coeffs.astype(complex)) + 0.5 * lnorm2
        w = np.exp(2 * self.logcoef.real - np.max(2 * self.logcoef.real))
        self.w = w / w.sum()
        self.logw = np.log(self.w, where=self.w > 0, out=np.full_like(self.w, -np.inf))
        self.mean = np.linalg.solve(2 * A.real, b.real[..., None])[..., 0]
        cov = np.linalg.inv(4 * A.real)
        self.chol = np.linalg.cholesky(cov)
        self.N = A.shape[0]
        self.m = A.shape[1]

    def log_u(self, x):
        """log(c_k psi_k(x)), shape (n, N)."""
        quad = np.einsum("ni,kij,nj->nk", x, self.A, x)
        return -quad + x @ self.b.T + self.c[None, :] + self.logcoef[None, :]

    def log_ratio(self, x, chunk_pairs=1 << 22):
        """log P(x) - log q(x) up to a constant, chunked over points."""
        n = x.shape[0]
        out = np.empty(n)
        step = max(1, chunk_pairs // max(1, self.N))
        for lo in range(0, n, step):
            lu = self.log_u(x[lo:lo + step])
            mx = np.max(lu.real, axis=1, keepdims=True)
            e = np.exp(lu - mx)
            s = np.abs(e.sum(axis=1)) ** 2
            t = np.sum(np.abs(e) ** 2, axis=1)
            with np.errstate(divide="ignore"):
                out[lo:lo + step] = np.log(s) - np.log(t)
        return out

    def log_q(self, x):
        lu = self.log_u(x)
        # |psi_k|^2 = |u_k|^2 / |coef_k|^2
        return logsumexp(self.logw[None, :] + 2 * (lu.real - self.logcoef.real[None, :]), axis=1)

    def draw(self, rng, n):
        k = rng.choice(self.N, size=n, p=self.w)
        z = rng.standard_normal((n, self.m))
        return self.mean[k] + np.einsum("nij,nj->ni", self.chol[k], z)


def target_density_unnorm(state, x):
    """|sum_k c_k psi_k(x)|^2 for x of shape (m,) or (n, m)."""
    if isinstance(state, CoherentSuperposition):
        state = lift_coherent(state)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    v = np.abs(state.wavefunction(np.atleast_2d(x))) ** 2
    return float(v[0]) if single else v


def proposal_density(state, x):
    """Normalized mixture density q(x)."""
    p = _Prepared(state)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.exp(p.log_q(x))


def proposal_draws(state, rng, n):
    """n independent proposal draws and their log q values."""
    p = _Prepared(state)
    x = p.draw(rng, n)
    return x, p.log_q(x)


def proposal_sample(state, rng):
    x, lq = proposal_draws(state, rng, 1)
    return x[0], float(lq[0])


def burn_in_steps(N, eps_mixing):
    return int(math.ceil(N * math.log(1.0 / eps_mixing)))


def mh_sample(state, cfg: SamplerConfig) -> SampleBatch:
    p = _Prepared(state)
    rng = make_rng(cfg.seed)
    burn = cfg.burn_in if cfg.burn_in is not None else burn_in_steps(p.N, cfg.eps_mixing)
    T = 1 + burn + cfg.n_shots * cfg.thinning
    x = p.draw(rng, T)
    lr = p.log_ratio(x)
    with np.errstate(divide="ignore"):
        lu = np.log(rng.random(T))
    chain, n_acc = kernels.mh_chain(lr, lu)
    rec = burn + cfg.thinning * np.arange(1, cfg.n_shots + 1)
    out = x[chain[rec]]
    rate = n_acc / (T - 1) if T > 1 else 1.0
    return SampleBatch(out, float(rate), int(burn), cfg.seed)


def rotated_quadrature_pre_gate(theta):
    """Phase shifts so that x sampled afterwards is X cos(theta) + P sin(theta) before."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return [PhaseShift(float(t), k) for k, t in enumerate(theta) if t != 0.0]


def sample_rotated(state, theta, cfg: SamplerConfig) -> SampleBatch:
    from .gaussian import apply_gate_sequence
    if isinstance(state, CoherentSuperposition):
        state = lift_coherent(state)
    return mh_sample(apply_gate_sequence(state, rotated_quadrature_pre_gate(theta)), cfg)


def envelope_constant(state):
    """M with P(x)/<Psi|Psi> <= M q(x) everywhere: N sum|c'_k|^2 / <Psi|Psi>,
    c'_k being the coefficients of the unit-norm branches (M = N when the
    state is normalized with sum|c'_k|^2 = 1)."""
    from .gaussian import gaussian_norm_squared
    if isinstance(state, CoherentSuperposition):
        state = lift_coherent(state)
    p = _Prepared(state)
    c2 = float(np.sum(np.exp(2 * p.logcoef.real)))
    return p.N * c2 / gaussian_norm_squared(state)
