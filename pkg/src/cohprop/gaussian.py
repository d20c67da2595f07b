"""Gaussian branches, Gaussian gates and polynomial quadrature readout.

A branch is the coordinate wavefunction

    psi(x) = exp(logPrefactor - (x - muX).A.(x - muX) + i muP.(x - muX))

with X = (a + a^dag)/sqrt2, P = -i d/dx. Internally every update works on
the equivalent quadratic form psi(x) = exp(-x.A.x + b.x + c),
b = 2 A muX + i muP, c = logPrefactor - muX.A.muX - i muP.muX.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import kernels
from .errors import ConditioningError, DimensionError, ValidationError
from .jet import exp_quadratic
from .state import CoherentSuperposition

MAX_DEGREE = 8
_SQ2 = math.sqrt(2.0)


# ------------------------------------------------------------------ branches

@dataclass(frozen=True, eq=False)
class GaussianBranch:
    Amat: np.ndarray
    muX: np.ndarray
    muP: np.ndarray
    logPrefactor: complex

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.Amat, dtype=complex))
        m = A.shape[0]
        muX = np.atleast_1d(np.array(self.muX, dtype=float))
        muP = np.atleast_1d(np.array(self.muP, dtype=float))
        if A.shape != (m, m) or muX.shape != (m,) or muP.shape != (m,):
            raise DimensionError("inconsistent branch dimensions")
        scale = max(1.0, float(np.max(np.abs(A))))
        if np.max(np.abs(A - A.T)) > 1e-12 * scale:
            raise ValidationError("Amat must be symmetric")
        A = 0.5 * (A + A.T)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(muX)) and np.all(np.isfinite(muP))
                and np.isfinite(self.logPrefactor)):
            raise ConditioningError("non-finite Gaussian branch parameters")
        try:
            np.linalg.cholesky(A.real)
        except np.linalg.LinAlgError:
            raise ConditioningError("Re(Amat) is not positive definite") from None
        object.__setattr__(self, "Amat", A)
        object.__setattr__(self, "muX", muX)
        object.__setattr__(self, "muP", muP)
        object.__setattr__(self, "logPrefactor", complex(self.logPrefactor))

    @property
    def num_modes(self):
        return self.Amat.shape[0]

    @property
    def b(self):
        return 2 * self.Amat @ self.muX + 1j * self.muP

    @property
    def c(self):
        return self.logPrefactor - self.muX @ self.Amat @ self.muX - 1j * self.muP @ self.muX

    @classmethod
    def from_quadratic(cls, A, b, c):
        A = np.asarray(A, dtype=complex)
        b = np.asarray(b, dtype=complex)
        A = 0.5 * (A + A.T)
        try:
            muX = np.linalg.solve(2 * A.real, b.real)
        except np.linalg.LinAlgError:
            raise ConditioningError("singular Re(Amat)") from None
        muP = b.imag - 2 * A.imag @ muX
        logpref = c + muX @ A @ muX + 1j * muP @ muX
        return cls(A, muX, muP, logpref)

    @classmethod
    def coherent(cls, alpha):
        """Branch of the coherent product |alpha>, phase included."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
        m = alpha.size
        return cls(0.5 * np.eye(m), _SQ2 * alpha.real, _SQ2 * alpha.imag,
                   -0.25 * m * math.log(math.pi) + 1j * float(np.sum(alpha.real * alpha.imag)))

    @classmethod
    def from_covariance(cls, cov, mean):
        """Pure Gaussian from its (x1..xm, p1..pm) covariance and mean.

        Only the XX and XP blocks are used; the PP block of a pure state is
        implied. The branch phase is set to zero (normalized, real at x = muX).
        """
        cov = np.asarray(cov, dtype=float)
        mean = np.asarray(mean, dtype=float)
        m = cov.shape[0] // 2
        if cov.shape != (2 * m, 2 * m) or mean.shape != (2 * m,):
            raise DimensionError("covariance must be 2m x 2m and mean length 2m")
        sxx = cov[:m, :m]
        sxp = 0.5 * (cov[:m, m:] + cov[m:, :m].T)
        sxx_inv = np.linalg.inv(sxx)
        A = 0.25 * sxx_inv - 0.5j * sxx_inv @ sxp
        A = 0.5 * (A + A.T)
        sign, logdet = np.linalg.slogdet(2 * A.real / math.pi)
        return cls(A, mean[:m], mean[m:], 0.25 * logdet)

    def covariance(self):
        """Symmetrized covariance of (x, p) for this pure branch."""
        sxx = np.linalg.inv(4 * self.Amat.real)
        ia = self.Amat.imag
        sxp = -2 * sxx @ ia
        spp = self.Amat.real + 4 * ia @ sxx @ ia
        return np.block([[sxx, sxp], [sxp.T, spp]])

    def log_wavefunction(self, x):
        x = np.asarray(x, dtype=float)
        return -np.einsum("...i,ij,...j->...", x, self.Amat, x) + x @ self.b + self.c

    def wavefunction(self, x):
        return np.exp(self.log_wavefunction(x))


@dataclass(frozen=True, eq=False)
class GaussianBranchSuperposition:
    coeffs: np.ndarray
    branches: list = field(default_factory=list)

    def __post_init__(self):
        c = np.atleast_1d(np.array(self.coeffs, dtype=complex))
        if c.shape[0] != len(self.branches):
            raise DimensionError("one coefficient per branch required")
        if len(self.branches) == 0:
            raise ValidationError("empty superposition")
        m = self.branches[0].num_modes
        if any(b.num_modes != m for b in self.branches):
            raise DimensionError("branches disagree on mode count")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "branches", list(self.branches))

    @property
    def num_modes(self):
        return self.branches[0].num_modes

    @property
    def num_branches(self):
        return len(self.branches)

    def stacked(self):
        """(A, b, c) arrays of shapes (N,m,m), (N,m), (N,)."""
        A = np.stack([br.Amat for br in self.branches])
        b = np.stack([br.b for br in self.branches])
        c = np.array([br.c for br in self.branches])
        return A, b, c

    def log_branch_values(self, x):
        """log(c_k psi_k(x)) for points x of shape (n, m); result (n, N)."""
        A, b, c = self.stacked()
        x = np.atleast_2d(np.asarray(x, dtype=float))
        quad = np.einsum("ni,kij,nj->nk", x, A, x)
        with np.errstate(divide="ignore"):
            logc = np.log(self.coeffs.astype(complex))
        return -quad + x @ b.T + c[None, :] + logc[None, :]

    def wavefunction(self, x):
        lv = self.log_branch_values(x)
        return np.exp(lv).sum(axis=1)


def lift_coherent(s: CoherentSuperposition) -> GaussianBranchSuperposition:
    return GaussianBranchSuperposition(s.coeffs.copy(),
                                       [GaussianBranch.coherent(row) for row in s.amps])


# --------------------------------------------------------------- gate types

@dataclass(frozen=True)
class PhaseShift:
    """exp(-i theta n): alpha -> alpha e^{-i theta}."""
    theta: float
    mode: int


@dataclass(frozen=True)
class Squeeze:
    """exp(r/2 (a^2 - a^dag^2)); psi(x) -> e^{r/2} psi(e^r x) on ``mode``."""
    r: float
    mode: int


@dataclass(frozen=True)
class BeamSplitter:
    """Mode map (alpha_i, alpha_j) -> W (alpha_i, alpha_j) with
    W = [[cos t, -e^{-i phi} sin t], [e^{i phi} sin t, cos t]]."""
    theta: float
    phi: float
    modes: tuple

    def __post_init__(self):
        i, j = self.modes
        if i == j:
            raise ValidationError("beam splitter needs two distinct modes")
        object.__setattr__(self, "modes", (int(i), int(j)))


@dataclass(frozen=True, eq=False)
class Displace:
    """D(d) = exp(d.a^dag - conj(d).a) on all modes."""
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", np.atleast_1d(np.asarray(self.d, dtype=complex)))


def gate_to_dict(g):
    if isinstance(g, PhaseShift):
        return {"gate": "phase", "theta": g.theta, "mode": g.mode}
    if isinstance(g, Squeeze):
        return {"gate": "squeeze", "r": g.r, "mode": g.mode}
    if isinstance(g, BeamSplitter):
        return {"gate": "beamsplitter", "theta": g.theta, "phi": g.phi, "modes": list(g.modes)}
    if isinstance(g, Displace):
        return {"gate": "displace", "d": [[float(z.real), float(z.imag)] for z in g.d]}
    raise ValidationError(f"unknown gate {g!r}")


def gate_from_dict(d):
    kind = d["gate"].lower()
    if kind == "phase":
        return PhaseShift(float(d["theta"]), int(d["mode"]))
    if kind == "squeeze":
        return Squeeze(float(d["r"]), int(d["mode"]))
    if kind == "beamsplitter":
        return BeamSplitter(float(d["theta"]), float(d.get("phi", 0.0)), tuple(d["modes"]))
    if kind == "displace":
        arr = np.asarray(d["d"], dtype=float).reshape(-1, 2)
        return Displace(arr[:, 0] + 1j * arr[:, 1])
    raise ValidationError(f"unknown gate kind {kind!r}")


def _mode_matrix(gate, m):
    """W with U^dag a U = W a for a passive gate."""
    W = np.eye(m, dtype=complex)
    if isinstance(gate, PhaseShift):
        W[gate.mode, gate.mode] = np.exp(-1j * gate.theta)
    else:
        i, j = gate.modes
        ct, st = math.cos(gate.theta), math.sin(gate.theta)
        W[i, i] = ct
        W[j, j] = ct
        W[i, j] = -np.exp(-1j * gate.phi) * st
        W[j, i] = np.exp(1j * gate.phi) * st
    return W


# ------------------------------------------------------ Gaussian integrals

def _logdet_sqrt_branch(Q):
    """log det Q on the branch continuous from det(Re Q); batched over leading axes.

    With Re Q = L L^T, det Q = det(Re Q) prod(1 + i t_k) where t_k are the
    eigenvalues of L^{-1} Im Q L^{-T}; each factor stays in the right half
    plane, so principal logs add up to the analytic continuation.
    """
    R = Q.real
    S = Q.imag
    try:
        L = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise ConditioningError("Re(Q) not positive definite") from None
    Linv = np.linalg.inv(L)
    T = Linv @ S @ np.swapaxes(Linv, -1, -2)
    T = 0.5 * (T + np.swapaxes(T, -1, -2))
    t = np.linalg.eigvalsh(T)
    ld = 2 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    return ld + np.sum(np.log1p(1j * t), axis=-1)


def log_gaussian_integral(Q, v):
    """log of int exp(-x.Q.x + v.x) dx, batched; Q complex symmetric, Re Q > 0."""
    Q = np.asarray(Q, dtype=complex)
    v = np.asarray(v, dtype=complex)
    m = Q.shape[-1]
    sol = np.linalg.solve(Q, v[..., None])[..., 0]
    return 0.5 * m * math.log(math.pi) - 0.5 * _logdet_sqrt_branch(Q) + 0.25 * np.sum(v * sol, axis=-1)


def log_overlap_quadratic(Ai, bi, ci, Aj, bj, cj):
    """log <psi_i|psi_j> for quadratic-form wavefunctions (batched)."""
    Q = np.conj(Ai) + Aj
    v = np.conj(bi) + bj
    return np.conj(ci) + cj + log_gaussian_integral(Q, v)


def overlap(bi: GaussianBranch, bj: GaussianBranch) -> complex:
    return complex(np.exp(log_overlap_quadratic(bi.Amat, bi.b, bi.c, bj.Amat, bj.b, bj.c)))


def _log_vacuum_overlap(A, b, c):
    m = A.shape[-1]
    return log_overlap_quadratic(0.5 * np.eye(m), np.zeros(m), -0.25 * m * math.log(math.pi), A, b, c)


# ----------------------------------------------------------- gate actions

def apply_gaussian_gate(br: GaussianBranch, gate) -> GaussianBranch:
    m = br.num_modes
    A, b, c = br.Amat, br.b, br.c
    if isinstance(gate, Displace):
        if gate.d.shape != (m,):
            raise DimensionError("displacement vector length must equal mode count")
        x0 = _SQ2 * gate.d.real
        p0 = _SQ2 * gate.d.imag
        Ax0 = A @ x0
        b2 = b + 2 * Ax0 + 1j * p0
        c2 = c - x0 @ Ax0 - b @ x0 - 0.5j * (x0 @ p0)
        return GaussianBranch.from_quadratic(A, b2, c2)
    if isinstance(gate, Squeeze):
        _check_mode(gate.mode, m)
        D = np.ones(m)
        D[gate.mode] = math.exp(gate.r)
        A2 = D[:, None] * A * D[None, :]
        try:
            return GaussianBranch.from_quadratic(A2, D * b, c + 0.5 * gate.r)
        except (ConditioningError, ValidationError) as exc:
            raise ConditioningError(f"squeeze r={gate.r} broke the branch: {exc}") from None
    if isinstance(gate, (PhaseShift, BeamSplitter)):
        if isinstance(gate, PhaseShift):
            _check_mode(gate.mode, m)
        else:
            _check_mode(gate.modes[0], m)
            _check_mode(gate.modes[1], m)
        V = _mode_matrix(gate, m).conj().T  # U a U^dag = V a
        F = 2 * A @ V.real + 1j * V.imag
        G = -2 * A @ V.imag + 1j * V.real
        A2 = 0.5j * np.linalg.solve(G, F)
        A2 = 0.5 * (A2 + A2.T)
        b2 = 1j * np.linalg.solve(G, b)
        # passive gates fix the vacuum, so <0|psi'> = <0|psi> fixes c'
        c2 = _log_vacuum_overlap(A, b, c) - _log_vacuum_overlap(A2, b2, 0.0)
        return GaussianBranch.from_quadratic(A2, b2, complex(c2))
    raise ValidationError(f"unsupported gate {gate!r}")


def _check_mode(k, m):
    if not 0 <= k < m:
        raise DimensionError(f"mode {k} outside 0..{m - 1}")


def apply_gate_sequence(state, gates):
    """Apply gates to every branch of a Gaussian superposition (or a single branch)."""
    if isinstance(state, GaussianBranch):
        for g in gates:
            state = apply_gaussian_gate(state, g)
        return state
    branches = list(state.branches)
    for g in gates:
        branches = [apply_gaussian_gate(b, g) for b in branches]
    return GaussianBranchSuperposition(state.coeffs.copy(), branches)


# ------------------------------------------------- generating function

def cross_generating(bi: GaussianBranch, bj: GaussianBranch, xiX=None, xiP=None) -> complex:
    """Z(xi) = <G_i| exp(xiX.X) exp(xiP.P) |G_j>; Z(0) = <G_i|G_j>."""
    m = bi.num_modes
    xiX = np.zeros(m) if xiX is None else np.asarray(xiX, dtype=complex)
    xiP = np.zeros(m) if xiP is None else np.asarray(xiP, dtype=complex)
    return complex(np.exp(_log_z(bi.Amat, bi.b, bi.c, bj.Amat, bj.b, bj.c, xiX, xiP)))


def _log_z(Ai, bi, ci, Aj, bj, cj, xiX, xiP):
    Q = np.conj(Ai) + Aj
    v = np.conj(bi) + bj + xiX + 2j * (Aj @ xiP)
    extra = xiP @ Aj @ xiP - 1j * (bj @ xiP)
    return np.conj(ci) + cj + extra + log_gaussian_integral(Q, v)


def _pair_quadratic(Ai, bi, ci, Aj, bj, cj):
    """log Z(0), gradient g and Hessian H of log Z in (xiX, xiP), batched."""
    m = Ai.shape[-1]
    Q = np.conj(Ai) + Aj
    v0 = np.conj(bi) + bj
    logz0 = np.conj(ci) + cj + log_gaussian_integral(Q, v0)
    B = Q.shape[0]
    eye = np.broadcast_to(np.eye(m, dtype=complex), (B, m, m))
    E = np.concatenate([eye, 2j * Aj], axis=-1)  # (B, m, 2m)
    Qinv_v0 = np.linalg.solve(Q, v0[..., None])[..., 0]
    Qinv_E = np.linalg.solve(Q, E)
    g = 0.5 * np.einsum("bki,bk->bi", E, Qinv_v0)
    g[:, m:] += -1j * bj
    H = 0.5 * np.einsum("bki,bkj->bij", E, Qinv_E)
    H[:, m:, m:] += 2 * Aj
    return logz0, g, H


def _moment_from_quadratic(logz0, g, H, q, s):
    orders = np.concatenate([np.asarray(q, int), np.asarray(s, int)])
    if orders.sum() > MAX_DEGREE:
        raise ValidationError(f"monomial degree {orders.sum()} exceeds cap {MAX_DEGREE}")
    act = np.flatnonzero(orders)
    if act.size == 0:
        return np.exp(logz0)
    degs = orders[act]
    jet = exp_quadratic(g[:, act], H[:, act][:, :, act], list(degs))
    return np.exp(logz0) * jet.derivative(tuple(degs))


def cross_moment(bi: GaussianBranch, bj: GaussianBranch, q, s) -> complex:
    """<G_i| X^q P^s |G_j> from derivatives of the generating function."""
    m = bi.num_modes
    q = np.asarray(q, int)
    s = np.asarray(s, int)
    if q.shape != (m,) or s.shape != (m,):
        raise DimensionError("multi-index length must equal mode count")
    logz0, g, H = _pair_quadratic(bi.Amat[None], bi.b[None], np.array([bi.c]),
                                  bj.Amat[None], bj.b[None], np.array([bj.c]))
    return complex(_moment_from_quadratic(logz0, g, H, q, s)[0])


# -------------------------------------------------------------- observables

@dataclass(frozen=True, eq=False)
class PolynomialObservable:
    """sum_k o_k X^q_k P^s_k + conj(o_k) P^s_k X^q_k."""
    terms: list
    num_modes: int | None = None
    label: str = ""

    def __post_init__(self):
        terms = []
        m = self.num_modes
        for o, q, s in self.terms:
            q = tuple(int(v) for v in q)
            s = tuple(int(v) for v in s)
            if len(q) != len(s):
                raise DimensionError("q and s must have the same length")
            if m is None:
                m = len(q)
            if len(q) != m:
                raise DimensionError("all multi-indices must have length num_modes")
            if min(q + s, default=0) < 0:
                raise ValidationError("negative exponent")
            terms.append((complex(o), q, s))
        if m is None:
            raise ValidationError("observable needs at least one term or num_modes")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "num_modes", m)

    @property
    def degree(self):
        return max((sum(q) + sum(s) for _, q, s in self.terms), default=0)

    def to_dict(self):
        return {"terms": [{"o": [o.real, o.imag], "q": list(q), "s": list(s)}
                          for o, q, s in self.terms]}

    @classmethod
    def from_dict(cls, d, num_modes=None):
        terms = []
        for t in d["terms"]:
            o = t["o"]
            o = complex(o[0], o[1]) if isinstance(o, (list, tuple)) else complex(o)
            terms.append((o, t["q"], t["s"]))
        return cls(terms, num_modes, d.get("label", ""))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text, num_modes=None):
        return cls.from_dict(json.loads(text), num_modes)

    @classmethod
    def parse(cls, name: str, num_modes: int):
        """Named monomials with 0-based modes: "X0", "P1", "X0X1", "X0^2",
        "X0P0sym" (= X0 P0 + P0 X0). Without "sym" the name denotes the
        Hermitian part of X^q P^s."""
        text = name.strip()
        sym = text.endswith("sym")
        if sym:
            text = text[:-3]
        toks = re.findall(r"([XP])(\d+)(?:\^(\d+))?", text)
        if not toks or "".join(a + b + (f"^{c}" if c else "") for a, b, c in toks) != text:
            raise ValidationError(f"cannot parse observable name {name!r}")
        q = [0] * num_modes
        s = [0] * num_modes
        for op, idx, pw in toks:
            k = int(idx)
            if k >= num_modes:
                raise DimensionError(f"mode {k} in {name!r} outside 0..{num_modes - 1}")
            (q if op == "X" else s)[k] += int(pw) if pw else 1
        o = 1.0 if sym else 0.5
        return cls([(o, q, s)], num_modes, name)


# ---- general Gaussian path

def _pairs_iter(N, chunk):
    I, J = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    I = I.reshape(-1)
    J = J.reshape(-1)
    for lo in range(0, I.size, chunk):
        yield I[lo:lo + chunk], J[lo:lo + chunk]


def expectation(state: GaussianBranchSuperposition, obs, chunk: int = 4096):
    """<Psi|O|Psi>/<Psi|Psi> over all ordered branch pairs.

    ``obs`` may be one observable or a list; a list returns a list.
    """
    single = isinstance(obs, PolynomialObservable)
    obs_list = [obs] if single else list(obs)
    m = state.num_modes
    for o in obs_list:
        if o.num_modes != m:
            raise DimensionError("observable and state disagree on mode count")
    A, b, c = state.stacked()
    N = state.num_branches
    coef = state.coeffs
    norm2 = 0.0 + 0.0j
    # M[t][i, j] = <G_i|X^q P^s|G_j> per term
    mats = [[np.zeros((N, N), dtype=complex) for _ in o.terms] for o in obs_list]
    for I, J in _pairs_iter(N, chunk):
        logz0, g, H = _pair_quadratic(A[I], b[I], c[I], A[J], b[J], c[J])
        if not np.all(np.isfinite(logz0)):
            raise ConditioningError("non-finite pair overlap")
        norm2 += np.sum(np.conj(coef[I]) * coef[J] * np.exp(logz0))
        for oi, o in enumerate(obs_list):
            for ti, (_, q, s) in enumerate(o.terms):
                mats[oi][ti][I, J] = _moment_from_quadratic(logz0, g, H, q, s)
    out = []
    for oi, o in enumerate(obs_list):
        total = 0.0 + 0.0j
        scale = 0.0
        for ti, (ok, _, _) in enumerate(o.terms):
            Mt = mats[oi][ti]
            S = np.vdot(coef, Mt @ coef)
            # the reversed-order term P^s X^q uses <G_i|P^s X^q|G_j> = conj(M[j, i])
            St = np.vdot(coef, Mt.conj().T @ coef)
            total += ok * S + np.conj(ok) * St
            scale += abs(ok) * float(np.abs(coef) @ np.abs(Mt) @ np.abs(coef))
        if abs(total.imag) > 1e-9 * max(abs(total), scale, 1e-300):
            raise ConditioningError(f"expectation has imaginary residue {total.imag:.3e}")
        if not np.isfinite(total):
            raise ConditioningError("non-finite expectation")
        out.append(float(total.real / norm2.real))
    return out[0] if single else out


def gaussian_norm_squared(state: GaussianBranchSuperposition) -> float:
    A, b, c = state.stacked()
    N = state.num_branches
    tot = 0.0 + 0.0j
    for I, J in _pairs_iter(N, 4096):
        tot += np.sum(np.conj(state.coeffs[I]) * state.coeffs[J]
                      * np.exp(log_overlap_quadratic(A[I], b[I], c[I], A[J], b[J], c[J])))
    return float(tot.real)


# ---- coherent fast path

def _poly_mul(p1, p2):
    out = {}
    for (j1, k1), c1 in p1.items():
        for (j2, k2), c2 in p2.items():
            for r in range(min(k1, j2) + 1):
                w = math.comb(k1, r) * math.comb(j2, r) * math.factorial(r)
                key = (j1 + j2 - r, k1 - r + k2)
                out[key] = out.get(key, 0) + c1 * c2 * w
    return {k: v for k, v in out.items() if v != 0}


_X = {(0, 1): 1 / _SQ2, (1, 0): 1 / _SQ2}
_P = {(0, 1): -1j / _SQ2, (1, 0): 1j / _SQ2}


def normal_order(q: int, s: int) -> dict:
    """X^q P^s = sum c[(j, k)] a^dag^j a^k for one mode."""
    poly = {(0, 0): 1.0 + 0j}
    for fac in [_X] * q + [_P] * s:
        poly = _poly_mul(poly, fac)
    return poly


def _term_normal_form(q, s):
    per_mode = [normal_order(qi, si) for qi, si in zip(q, s)]
    out = {}
    for combo in product(*(list(p.items()) for p in per_mode)):
        J = tuple(k[0][0] for k in combo)
        K = tuple(k[0][1] for k in combo)
        val = 1.0 + 0j
        for k in combo:
            val *= k[1]
        out[(J, K)] = out.get((J, K), 0) + val
    return out


def _monomials(amps, coeffs, idx_list):
    """Columns C_k prod_p alpha_kp^{K_p} for each multi-index K."""
    cols = np.empty((amps.shape[0], len(idx_list)), dtype=complex)
    for col, K in enumerate(idx_list):
        v = coeffs.copy()
        for p, e in enumerate(K):
            if e:
                v = v * amps[:, p] ** e
        cols[:, col] = v
    return cols


def expectation_coherent_fast(state: CoherentSuperposition, obs, return_norm=False):
    """Same value as expectation(lift_coherent(state), obs) using
    <a|a^dag^j a^k|b> = conj(a)^j b^k <a|b> and one Gram pass."""
    single = isinstance(obs, PolynomialObservable)
    obs_list = [obs] if single else list(obs)
    m = state.num_modes
    forms = []
    ks = {(0,) * m: 0}
    for o in obs_list:
        if o.num_modes != m:
            raise DimensionError("observable and state disagree on mode count")
        tf = [(ok, _term_normal_form(q, s)) for ok, q, s in o.terms]
        for _, nf in tf:
            for (_, K) in nf:
                ks.setdefault(K, len(ks))
        forms.append(tf)
    klist = list(ks)
    V = _monomials(state.amps, state.coeffs, klist)
    W = kernels.gram_matvec_self(state.amps, V)
    norm2 = float(np.vdot(state.coeffs, W[:, 0]).real)
    u_cache = {}
    out = []
    for tf in forms:
        total = 0.0
        for ok, nf in tf:
            S = 0.0 + 0.0j
            for (J, K), cf in nf.items():
                if J not in u_cache:
                    u_cache[J] = _monomials(state.amps, state.coeffs, [J])[:, 0]
                S += cf * np.vdot(u_cache[J], W[:, ks[K]])
            total += 2.0 * (ok * S).real
        out.append(total / norm2)
    res = out[0] if single else out
    return (res, norm2) if return_norm else res
