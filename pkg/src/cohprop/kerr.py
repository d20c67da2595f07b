"""Kerr gate exp(i kappa n^2) on coherent branches.

Three ways to rewrite K|alpha> as a short coherent superposition on the
circle of radius |alpha|:

* ``General``       N_F+1 points from a DFT of the truncated Kerr phases,
                    with a certified error set by a Poisson cutoff;
* ``FiniteFourier`` 2M points, n^2 replaced by its discrete-Laplacian
                    symbol; exactly norm preserving (weak Kerr);
* ``TwoTerm``       {alpha, -alpha} with the optimal mixing phase.

Every expansion is returned as orbit factors ``phases`` (new amplitude is
alpha * phase) and coefficients ``coeffs``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DimensionError, ValidationError
from .state import CoherentSuperposition, gram_matrix

FFT_MIN_POINTS = 64


@dataclass(frozen=True)
class KerrGate:
    kappa: float
    mode: int = 0

    def __post_init__(self):
        if not np.isfinite(self.kappa):
            raise ValidationError("kappa must be finite")
        if int(self.mode) != self.mode or self.mode < 0:
            raise ValidationError(f"invalid mode index {self.mode}")

    def to_dict(self):
        return {"kappa": float(self.kappa), "mode": int(self.mode)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["kappa"]), int(d.get("mode", 0)))


@dataclass(frozen=True, eq=False)
class KerrExpansion:
    phases: np.ndarray
    coeffs: np.ndarray
    scheme: str
    # 1 for branches counted as "weak" (second TwoTerm branch), else 0
    weak: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.weak is None:
            object.__setattr__(self, "weak", np.zeros(len(self.coeffs), dtype=np.int64))

    def __len__(self):
        return len(self.coeffs)

    def points(self, alpha):
        return alpha * self.phases

    def to_csv(self, path_or_buf):
        """Rows r, re(phase), im(phase), re(c), im(c)."""
        lines = ["r,re_omega,im_omega,re_c,im_c"]
        for r, (w, c) in enumerate(zip(self.phases, self.coeffs)):
            lines.append(f"{r},{w.real!r},{w.imag!r},{c.real!r},{c.imag!r}")
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)


def _identity_expansion(scheme):
    return KerrExpansion(np.ones(1, dtype=complex), np.ones(1, dtype=complex), scheme)


# ---------------------------------------------------------------- cutoffs

def poisson_cutoff(lam: float, eps: float) -> int:
    """Smallest integer >= lam + sqrt(2 lam ln(1/eps)) + (2/3) ln(1/eps) - 1, clamped at 0.

    The Poisson(lam) tail beyond the returned N is then at most eps, so
    projecting a coherent state with |alpha|^2 = lam onto n <= N moves it
    by at most sqrt(2 eps).
    """
    if not (0.0 < eps < 1.0):
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    if lam < 0 or not np.isfinite(lam):
        raise ValidationError(f"lambda must be finite and >= 0, got {lam}")
    L = math.log(1.0 / eps)
    val = lam + math.sqrt(2.0 * lam * L) + (2.0 / 3.0) * L - 1.0
    return max(0, math.ceil(val))


@dataclass(frozen=True)
class CutoffPolicy:
    """Choose N_F from a target error or fix it.

    With ``amplitude_bound`` set, one uniform N_F is taken from the worst
    case |alpha| <= amplitude_bound instead of per branch.
    """
    eps_kerr: float | None = 1e-8
    n_f: int | None = None
    amplitude_bound: float | None = None

    def __post_init__(self):
        if self.n_f is None:
            if self.eps_kerr is None or not (0 < self.eps_kerr < 1):
                raise ValidationError("eps_kerr must lie in (0, 1)")
        elif self.n_f < 0:
            raise ValidationError("n_f must be >= 0")

    def resolve(self, alpha) -> int:
        if self.n_f is not None:
            return int(self.n_f)
        lam = self.amplitude_bound ** 2 if self.amplitude_bound is not None else abs(alpha) ** 2
        return poisson_cutoff(lam, self.eps_kerr)


def certified_general_bound(alpha, eps_kerr: float, n_f: int | None = None) -> float:
    """sqrt(2 eps) + 2 r^(N+1)/sqrt((N+1)!) with r = |alpha|."""
    if n_f is None:
        n_f = poisson_cutoff(abs(alpha) ** 2, eps_kerr)
    r = abs(alpha)
    if r == 0:
        leak = 0.0
    else:
        leak = 2.0 * math.exp((n_f + 1) * math.log(r) - 0.5 * gammaln(n_f + 2))
    return math.sqrt(2.0 * eps_kerr) + leak


# ------------------------------------------------------------- expansions

def expand_general(alpha: complex, kappa: float, policy: CutoffPolicy | None = None,
                   normalize: bool = True) -> KerrExpansion:
    """DFT expansion on N_F+1 points of radius |alpha|.

    ``normalize`` rescales the coefficients so the superposition has unit
    norm (the grid leaks a little weight above N_F).
    """
    policy = policy or CutoffPolicy()
    alpha = complex(alpha)
    r = abs(alpha)
    if r == 0.0:
        return _identity_expansion("general")
    n_f = policy.resolve(alpha)
    P = n_f + 1
    n = np.arange(P)
    u = alpha / r
    # log of e^{r^2/2} / P / sqrt(sum_m r^{2m}/m!)
    log_z = logsumexp(n * math.log(r * r) - gammaln(n + 1))
    log_pref = 0.5 * r * r - math.log(P) - 0.5 * log_z
    x = np.exp(1j * kappa * n.astype(float) ** 2) * u ** n
    if P >= FFT_MIN_POINTS:
        dft = np.fft.fft(x)
    else:
        k = n[:, None]
        dft = (x[None, :] * np.exp(-2j * np.pi * ((k * n[None, :]) % P) / P)).sum(axis=1)
    c = math.exp(log_pref) * dft
    # orbit factor: r w^k = alpha * (w^k / u)
    phases = np.exp(2j * np.pi * n / P) / u
    if normalize:
        G = gram_matrix(alpha * phases[:, None], alpha * phases[:, None])
        nrm2 = float(np.real(np.vdot(c, G @ c)))
        c = c / math.sqrt(nrm2)
    return KerrExpansion(phases, c, "general")


def dynamic_range(alpha, radius, n_f):
    """max_n |(alpha/radius)^n| / min_n |(alpha/radius)^n| over n = 0..n_f."""
    if radius <= 0:
        raise ValidationError("radius must be > 0")
    r = abs(alpha) / radius
    if r == 0:
        return math.inf if n_f > 0 else 1.0
    return float(max(r, 1.0 / r) ** n_f)


def finite_fourier_coeffs(kappa: float, M: int) -> np.ndarray:
    """c_r = (1/2M) sum_n exp(i kappa (4M^2/pi^2) sin^2(pi n / 2M)) e^{-i pi n r / M}."""
    if int(M) != M or M < 1:
        raise ValidationError(f"M must be an integer >= 1, got {M}")
    M = int(M)
    n = np.arange(2 * M)
    lam_n = (4.0 * M * M / np.pi ** 2) * np.sin(np.pi * n / (2 * M)) ** 2
    return np.fft.fft(np.exp(1j * kappa * lam_n)) / (2 * M)


def expand_finite_fourier(alpha: complex, kappa: float, M: int = 3) -> KerrExpansion:
    c = finite_fourier_coeffs(kappa, M)
    phases = np.exp(1j * np.pi * np.arange(2 * M) / M)
    return KerrExpansion(phases, c, "finite_fourier")


def optimal_theta_factor(lam):
    """f(lam) = lam^2 + lam coth(lam), f(0) = 1."""
    lam = np.asarray(lam, dtype=float)
    small = lam < 1e-3
    safe = np.where(small, 1.0, lam)
    f = lam ** 2 + safe / np.tanh(safe)
    fs = 1.0 + (4.0 / 3.0) * lam ** 2 - lam ** 4 / 45.0
    return np.where(small, fs, f)


def two_term_coeffs(lam, kappa):
    theta = kappa * optimal_theta_factor(lam)
    e = np.exp(1j * theta)
    return (1 + e) / 2, (1 - e) / 2


def expand_two_term(alpha: complex, kappa: float) -> KerrExpansion:
    c0, c1 = two_term_coeffs(abs(alpha) ** 2, kappa)
    return KerrExpansion(np.array([1.0, -1.0], dtype=complex),
                         np.array([c0, c1], dtype=complex), "two_term",
                         weak=np.array([0, 1], dtype=np.int64))


def two_term_error_bound(lam: float, kappa: float) -> float:
    """kappa * sqrt(lam^4 + 6lam^3 + 7lam^2 + lam - num^2 / (2(1 - e^{-2 lam})))."""
    if lam < 0:
        raise ValidationError("lambda must be >= 0")
    if lam == 0:
        return 0.0
    if lam < 1e-3:
        q = 8 * lam ** 2 + (8.0 / 3.0) * lam ** 3 + 4 * lam ** 4
    else:
        one_m = -math.expm1(-2 * lam)
        num = (lam ** 2 + lam) - math.exp(-2 * lam) * (lam ** 2 - lam)
        q = lam ** 4 + 6 * lam ** 3 + 7 * lam ** 2 + lam - num ** 2 / (2 * one_m)
    return abs(kappa) * math.sqrt(max(q, 0.0))


# ---------------------------------------------------------------- schemes

@dataclass(frozen=True)
class General:
    eps_kerr: float = 1e-8
    n_f: int | None = None
    amplitude_bound: float | None = None

    name = "general"

    @property
    def policy(self):
        return CutoffPolicy(self.eps_kerr, self.n_f, self.amplitude_bound)

    def expand(self, alpha, kappa):
        return expand_general(alpha, kappa, self.policy)

    def to_dict(self):
        return {"name": self.name, "eps_kerr": self.eps_kerr, "n_f": self.n_f,
                "amplitude_bound": self.amplitude_bound}


@dataclass(frozen=True)
class FiniteFourier:
    M: int = 3

    name = "finite_fourier"

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValidationError("M must be an integer >= 1")

    def expand(self, alpha, kappa):
        return expand_finite_fourier(alpha, kappa, self.M)

    def to_dict(self):
        return {"name": self.name, "M": int(self.M)}


@dataclass(frozen=True)
class TwoTerm:
    name = "two_term"

    def expand(self, alpha, kappa):
        return expand_two_term(alpha, kappa)

    def to_dict(self):
        return {"name": self.name}


def scheme_from_dict(d):
    name = d["name"].lower().replace("-", "_")
    if name == "general":
        return General(d.get("eps_kerr", 1e-8), d.get("n_f"), d.get("amplitude_bound"))
    if name in ("finite_fourier", "finitefourier", "ff"):
        return FiniteFourier(int(d.get("M", 3)))
    if name in ("two_term", "twoterm"):
        return TwoTerm()
    raise ValidationError(f"unknown Kerr scheme {d['name']!r}")


# ------------------------------------------------------------- application

def _branch_expansions(scheme, alpha_col, kappa):
    """Return (sizes, phases, coeffs, weak) concatenated over branches."""
    n = alpha_col.shape[0]
    nz = alpha_col != 0
    if isinstance(scheme, FiniteFourier):
        e = scheme.expand(1.0, kappa)
        E = len(e)
        sizes = np.where(nz, E, 1)
        if nz.all():
            return (sizes, np.tile(e.phases, n), np.tile(e.coeffs, n), np.zeros(n * E, np.int64))
    if isinstance(scheme, TwoTerm):
        c0, c1 = two_term_coeffs(np.abs(alpha_col) ** 2, kappa)
        sizes = np.where(nz, 2, 1)
        if nz.all():
            ph = np.tile(np.array([1.0, -1.0], dtype=complex), n)
            co = np.column_stack([c0, c1]).reshape(-1)
            wk = np.tile(np.array([0, 1], dtype=np.int64), n)
            return sizes, ph, co, wk
    # generic path: one expansion per branch
    sizes = np.empty(n, dtype=np.int64)
    ph, co, wk = [], [], []
    for k in range(n):
        if alpha_col[k] == 0:
            e = _identity_expansion(getattr(scheme, "name", "general"))
        else:
            e = scheme.expand(alpha_col[k], kappa)
        sizes[k] = len(e)
        ph.append(e.phases)
        co.append(e.coeffs)
        wk.append(e.weak)
    return sizes, np.concatenate(ph), np.concatenate(co), np.concatenate(wk)


def apply_kerr(s: CoherentSuperposition, gate: KerrGate, scheme, weak_counts=None,
               return_weak=False):
    """Replace each branch by its Kerr expansion on ``gate.mode``.

    Output branches are grouped by parent in input order. Vacuum
    amplitudes on the gate mode are left untouched (the gate acts as the
    identity there). With ``return_weak`` the updated per-branch weak
    counters are returned as well.
    """
    if not 0 <= gate.mode < s.num_modes:
        raise DimensionError(f"gate mode {gate.mode} outside 0..{s.num_modes - 1}")
    col = s.amps[:, gate.mode]
    sizes, ph, co, wk = _branch_expansions(scheme, col, gate.kappa)
    parent = np.repeat(np.arange(s.num_branches), sizes)
    amps = s.amps[parent].copy()
    amps[:, gate.mode] = col[parent] * ph
    coeffs = s.coeffs[parent] * co
    out = CoherentSuperposition(coeffs, amps)
    if not return_weak:
        return out
    base = np.zeros(s.num_branches, np.int64) if weak_counts is None else np.asarray(weak_counts)
    return out, base[parent] + wk
