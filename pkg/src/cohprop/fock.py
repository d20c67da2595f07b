"""Dense truncated-Fock reference simulator.

States are tensors of shape (d,)*m with d levels per mode (n = 0..d-1).
Single-mode operators act through tensordot on one axis; the quadratic
DPLO generator is a sparse Kronecker sum exponentiated with
``expm_multiply`` (or densely for small spaces).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln

from .errors import CutoffError, DimensionError, OracleRefusal, ValidationError

MAX_AMPLITUDES = 2 ** 27
GUARD_LEVELS = 2
LEAKAGE_ABORT = 1e-6
DENSE_MAX_DIM = 1024


def _check_size(d, m):
    if d ** m > MAX_AMPLITUDES:
        raise OracleRefusal(f"{d}^{m} amplitudes exceed the dense budget of 2^27")


@dataclass(eq=False)
class FockState:
    amplitudes: np.ndarray  # shape (d,)*m
    leakage: float = 0.0

    @property
    def cutoff(self):
        return self.amplitudes.shape[0]

    @property
    def num_modes(self):
        return self.amplitudes.ndim

    @property
    def vector(self):
        return self.amplitudes.reshape(-1)

    def norm(self):
        return float(np.linalg.norm(self.vector))

    def inner(self, other: "FockState") -> complex:
        return complex(np.vdot(self.vector, other.vector))

    def guard_probability(self):
        """Probability weight with any mode in the top GUARD_LEVELS levels."""
        d, m = self.cutoff, self.num_modes
        p = np.abs(self.amplitudes) ** 2
        inner = p[(slice(0, d - GUARD_LEVELS),) * m].sum() if d > GUARD_LEVELS else 0.0
        return float(p.sum() - inner)

    def number_distribution(self, mode):
        p = np.abs(self.amplitudes) ** 2
        axes = tuple(a for a in range(self.num_modes) if a != mode)
        return p.sum(axis=axes)

    def dump(self, path):
        """Little-endian float64, re/im interleaved, C order."""
        self.vector.astype("<c16").view("<f8").tofile(path)

    @classmethod
    def load(cls, path, cutoff, num_modes):
        raw = np.fromfile(path, dtype="<f8")
        z = raw[0::2] + 1j * raw[1::2]
        return cls(z.reshape((cutoff,) * num_modes))


# ------------------------------------------------------------ encoding

def coherent_vector(alpha, cutoff):
    """<n|alpha> for n < cutoff, exact (not renormalized)."""
    alpha = complex(alpha)
    n = np.arange(cutoff)
    if alpha == 0:
        v = np.zeros(cutoff, dtype=complex)
        v[0] = 1.0
        return v
    r = abs(alpha)
    logmag = -0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def _poisson_tail(lam, cutoff):
    if lam == 0:
        return 0.0
    n = np.arange(cutoff)
    return float(max(0.0, 1.0 - np.exp(-lam + n * math.log(lam) - gammaln(n + 1)).sum()))


def encode_coherent(alpha_row, cutoff, tail_tol=1e-12, normalize=True) -> FockState:
    """Truncated coherent product; raises CutoffError if the dropped tail exceeds tail_tol."""
    alpha_row = np.atleast_1d(np.asarray(alpha_row, dtype=complex))
    _check_size(cutoff, alpha_row.size)
    tail = 0.0
    vecs = []
    for a in alpha_row:
        t = _poisson_tail(abs(a) ** 2, cutoff)
        if t > tail_tol:
            raise CutoffError(f"cutoff {cutoff} leaves Poisson tail {t:.2e} > {tail_tol:.1e} at |alpha|={abs(a):.3f}")
        tail = 1.0 - (1.0 - tail) * (1.0 - t)
        vecs.append(coherent_vector(a, cutoff))
    psi = vecs[0]
    for v in vecs[1:]:
        psi = np.multiply.outer(psi, v)
    psi = np.asarray(psi).reshape((cutoff,) * alpha_row.size)
    if normalize:
        psi = psi / np.linalg.norm(psi)
    return FockState(psi, leakage=tail)


def encode_superposition(state, cutoff, tail_tol=1e-12) -> FockState:
    """sum_k C_k |alpha_k> with exact (unnormalized) truncated coherent vectors."""
    _check_size(cutoff, state.num_modes)
    psi = np.zeros((cutoff,) * state.num_modes, dtype=complex)
    leak = 0.0
    for c, row in zip(state.coeffs, state.amps):
        f = encode_coherent(row, cutoff, tail_tol, normalize=False)
        psi += c * f.amplitudes
        leak = max(leak, f.leakage)
    return FockState(psi, leakage=leak)


def vacuum(cutoff, m) -> FockState:
    _check_size(cutoff, m)
    psi = np.zeros((cutoff,) * m, dtype=complex)
    psi[(0,) * m] = 1.0
    return FockState(psi)


# ------------------------------------------------------- single-mode ops

def annihilation(d):
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


def creation(d):
    return annihilation(d).conj().T


def number_op(d):
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def x_op(d):
    a = annihilation(d)
    return (a + a.conj().T) / math.sqrt(2)


def p_op(d):
    a = annihilation(d)
    return -1j * (a - a.conj().T) / math.sqrt(2)


def apply_single(psi, op, mode):
    """Apply a d x d operator to one axis of a state tensor."""
    out = np.tensordot(op, psi, axes=([1], [mode]))
    return np.moveaxis(out, 0, mode)


def apply_diagonal(psi, diag, mode):
    shape = [1] * psi.ndim
    shape[mode] = -1
    return psi * diag.reshape(shape)


# ------------------------------------------------------------ operators

def _embed(op, mode, d, m):
    """Sparse kron(I, ..., op, ..., I)."""
    out = None
    for k in range(m):
        f = sp.csr_matrix(op) if k == mode else sp.identity(d, dtype=complex, format="csr")
        out = f if out is None else sp.kron(out, f, format="csr")
    return out


def dplo_hamiltonian(layer, cutoff):
    """Sparse sum K_jk a_j^dag a_k + eta_j a_j^dag + conj(eta_j) a_j."""
    m = layer.num_modes
    d = cutoff
    _check_size(d, m)
    a = [_embed(annihilation(d), k, d, m) for k in range(m)]
    ad = [x.conj().T.tocsr() for x in a]
    H = sp.csr_matrix((d ** m, d ** m), dtype=complex)
    for j in range(m):
        for k in range(m):
            if layer.K[j, k] != 0:
                H = H + layer.K[j, k] * (ad[j] @ a[k])
        if layer.eta[j] != 0:
            H = H + layer.eta[j] * ad[j] + np.conj(layer.eta[j]) * a[j]
    return H.tocsr()


def bose_hubbard_hamiltonian(params, cutoff):
    """Rotating-frame driven Bose-Hubbard Hamiltonian, sparse."""
    m = len(params.Omega)
    d = cutoff
    _check_size(d, m)
    a = [_embed(annihilation(d), k, d, m) for k in range(m)]
    ad = [x.conj().T.tocsr() for x in a]
    nk = [ad[k] @ a[k] for k in range(m)]
    H = sp.csr_matrix((d ** m, d ** m), dtype=complex)
    for i, j in params.edges:
        H = H - params.J * (ad[i] @ a[j] + ad[j] @ a[i])
    for k in range(m):
        H = H - params.Delta * nk[k] + 0.5 * params.U * (nk[k] @ nk[k])
        om = complex(params.Omega[k])
        H = H + om * ad[k] + np.conj(om) * a[k]
    return H.tocsr()


class DploPropagator:
    """exp(-i H t) for one DPLO layer, dense for small spaces or via expm_multiply."""

    def __init__(self, layer, cutoff, method="auto"):
        self.H = dplo_hamiltonian(layer, cutoff)
        self.t = layer.t
        dim = self.H.shape[0]
        if method == "auto":
            method = "dense" if dim <= DENSE_MAX_DIM else "krylov"
        if method not in ("dense", "krylov"):
            raise ValidationError(f"unknown method {method!r}")
        self.method = method
        self.U = None
        if method == "dense":
            Hd = self.H.toarray()
            w, V = np.linalg.eigh(0.5 * (Hd + Hd.conj().T))
            self.U = (V * np.exp(-1j * w * self.t)) @ V.conj().T

    def __call__(self, vec):
        if self.U is not None:
            return self.U @ vec
        return expm_multiply(-1j * self.t * self.H, vec)


def evolve_hamiltonian(state: FockState, H, t) -> FockState:
    """exp(-i H t) applied to the state (exact within the cutoff)."""
    v = expm_multiply(-1j * t * H, state.vector)
    return FockState(v.reshape(state.amplitudes.shape), state.leakage)


def kerr_phase(d, kappa, M=None):
    """Diagonal of exp(i kappa n^2); with ``M`` the n^2 is replaced by the
    2M-periodic symbol (2M/pi)^2 sin^2(pi n / 2M) that the finite-Fourier
    expansion reproduces exactly."""
    n = np.arange(d, dtype=float)
    if M is None:
        return np.exp(1j * kappa * n * n)
    lam = (2 * M / np.pi) ** 2 * np.sin(np.pi * n / (2 * M)) ** 2
    return np.exp(1j * kappa * lam)


def evolve_trotter(state: FockState, circuit, steps=None, order="dplo_first", method="auto",
                   callback=None, leakage_abort=LEAKAGE_ABORT, symbol_M=None) -> FockState:
    """Run the circuit layers (all, or the first ``steps``) on a Fock state.

    Each layer applies exp(-i H_DPLO t) then the diagonal Kerr phases (or
    the reverse with order="kerr_first"). Aborts with CutoffError when the
    guard band picks up more than ``leakage_abort`` probability.
    ``symbol_M`` swaps n^2 for the finite-Fourier symbol (see kerr_phase).
    """
    if circuit.num_modes != state.num_modes:
        raise DimensionError("circuit and state disagree on mode count")
    layers = circuit.layers if steps is None else circuit.layers[:steps]
    d = state.cutoff
    psi = state.amplitudes
    cache = {}
    if callback is not None:
        callback(0, FockState(psi, state.leakage))
    for li, (layer, gates) in enumerate(layers, start=1):
        prop = None
        if layer is not None:
            if id(layer) not in cache:
                cache[id(layer)] = (layer, DploPropagator(layer, d, method))
            prop = cache[id(layer)][1]

        def kerr(p):
            for g in gates:
                p = apply_diagonal(p, kerr_phase(d, g.kappa, symbol_M), g.mode)
            return p

        if order == "kerr_first":
            psi = kerr(psi)
        if prop is not None:
            psi = prop(psi.reshape(-1)).reshape(psi.shape)
        if order == "dplo_first":
            psi = kerr(psi)
        cur = FockState(psi, state.leakage)
        g = cur.guard_probability()
        if g > leakage_abort:
            raise CutoffError(f"guard-band probability {g:.2e} at layer {li} (cutoff {d})")
        if callback is not None:
            callback(li, cur)
    return FockState(psi, state.leakage)


def kerr_on_coherent(alpha, kappa, cutoff, tail_tol=1e-12) -> FockState:
    f = encode_coherent([alpha], cutoff, tail_tol, normalize=False)
    return FockState(f.amplitudes * kerr_phase(cutoff, kappa), f.leakage)


# ------------------------------------------------------------ readout

def _apply_monomial(psi, q, s, xo, po):
    # X^q P^s |psi>: P factors act first
    for mode, e in enumerate(s):
        for _ in range(e):
            psi = apply_single(psi, po, mode)
    for mode, e in enumerate(q):
        for _ in range(e):
            psi = apply_single(psi, xo, mode)
    return psi


def matrix_element(bra: FockState, ket: FockState, q, s) -> complex:
    d = ket.cutoff
    phi = _apply_monomial(ket.amplitudes, q, s, x_op(d), p_op(d))
    return complex(np.vdot(bra.amplitudes.reshape(-1), phi.reshape(-1)))


def expectation_fock(state: FockState, obs, guard_tol=1e-10) -> float:
    """<psi|O|psi>/<psi|psi> with dense operator products.

    The state must keep essentially no weight within ``degree`` levels of
    the top, otherwise truncated ladder operators would bias the result.
    """
    d, m = state.cutoff, state.num_modes
    deg = obs.degree
    p = np.abs(state.amplitudes) ** 2
    tot = p.sum()
    if d > deg:
        inner = p[(slice(0, d - deg),) * m].sum()
        if (tot - inner) > guard_tol * tot:
            raise CutoffError(f"weight {(tot - inner) / tot:.2e} near the cutoff for degree {deg}")
    xo, po = x_op(d), p_op(d)
    val = 0.0 + 0.0j
    for o, q, s in obs.terms:
        phi = _apply_monomial(state.amplitudes, q, s, xo, po)
        z = np.vdot(state.amplitudes.reshape(-1), phi.reshape(-1))
        val += o * z + np.conj(o * z)
    return float(val.real / tot)


def hermite_functions(nmax, x):
    """h_n(x) = <x|n> for n < nmax, shape (nmax, len(x))."""
    x = np.asarray(x, dtype=float)
    h = np.zeros((nmax,) + x.shape)
    h[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if nmax > 1:
        h[1] = math.sqrt(2.0) * x * h[0]
    for n in range(1, nmax - 1):
        h[n + 1] = math.sqrt(2.0 / (n + 1)) * x * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


def position_wavefunction(state: FockState, x):
    """psi(x1..xm) at points x of shape (npts, m)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d, m = state.cutoff, state.num_modes
    out = np.empty(x.shape[0], dtype=complex)
    for i, pt in enumerate(x):
        t = state.amplitudes
        for k in range(m):
            t = np.tensordot(hermite_functions(d, pt[k:k + 1])[:, 0], t, axes=([0], [0]))
        out[i] = t
    return out


def quadrature_pdf(state: FockState, mode, grid):
    """Marginal |psi|^2 of x_mode on ``grid``, trapezoid-normalized to 1."""
    grid = np.asarray(grid, dtype=float)
    if not np.all(np.isfinite(grid)):
        raise ValidationError("grid must be finite")
    h = hermite_functions(state.cutoff, grid)  # (d, G)
    amp = np.moveaxis(state.amplitudes, mode, 0).reshape(state.cutoff, -1)
    wf = h.T @ amp  # (G, rest)
    dens = np.sum(np.abs(wf) ** 2, axis=1)
    z = np.trapezoid(dens, grid) if hasattr(np, "trapezoid") else np.trapz(dens, grid)
    return dens / z


# --------------------------------------------------------- Gaussian gates

def gate_matrix(gate, cutoff):
    """Dense single- or two-mode matrix of a Gaussian gate (for cross-checks).

    Built on a padded space and cropped, so entries near the cutoff are
    only approximate.
    """
    from .gaussian import BeamSplitter, PhaseShift, Squeeze
    d = cutoff
    pad = d + 40
    a = annihilation(pad)
    ad = a.conj().T
    if isinstance(gate, PhaseShift):
        return np.diag(np.exp(-1j * gate.theta * np.arange(d)))
    if isinstance(gate, Squeeze):
        G = 0.5 * gate.r * (a @ a - ad @ ad)
        return scipy.linalg.expm(G)[:d, :d]
    if isinstance(gate, BeamSplitter):
        pad2 = d + 12
        a = annihilation(pad2)
        I = np.eye(pad2)
        ai, aj = np.kron(a, I), np.kron(I, a)
        th, ph = gate.theta, gate.phi
        G = th * (np.exp(1j * ph) * ai @ aj.conj().T - np.exp(-1j * ph) * ai.conj().T @ aj)
        U = scipy.linalg.expm(G).reshape(pad2, pad2, pad2, pad2)
        return U[:d, :d, :d, :d].reshape(d * d, d * d)
    raise ValidationError(f"no Fock matrix for {gate!r}")


def apply_gate(state: FockState, gate) -> FockState:
    from .gaussian import BeamSplitter, Displace
    d = state.cutoff
    psi = state.amplitudes
    if isinstance(gate, Displace):
        pad = d + 40
        a = annihilation(pad)
        for k, dk in enumerate(gate.d):
            if dk != 0:
                D = scipy.linalg.expm(dk * a.conj().T - np.conj(dk) * a)[:d, :d]
                psi = apply_single(psi, D, k)
        return FockState(psi, state.leakage)
    if isinstance(gate, BeamSplitter):
        i, j = gate.modes
        U = gate_matrix(gate, d).reshape(d, d, d, d)
        psi = np.moveaxis(psi, (i, j), (0, 1))
        psi = np.tensordot(U, psi, axes=([2, 3], [0, 1]))
        psi = np.moveaxis(psi, (0, 1), (i, j))
        return FockState(psi, state.leakage)
    return FockState(apply_single(psi, gate_matrix(gate, d), gate.mode), state.leakage)


def expansion_distance(alpha, kappa, expansion, tail=1e-32) -> float:
    """||K_kappa|alpha> - sum_r c_r |alpha phase_r>|| in a Fock basis large
    enough that both tails are below ``tail``."""
    from .kerr import poisson_cutoff
    pts = alpha * np.asarray(expansion.phases)
    lam = max(abs(alpha) ** 2, float(np.max(np.abs(pts)) ** 2))
    D = poisson_cutoff(lam, tail) + 2
    v = np.zeros(D, dtype=complex)
    for c, b in zip(expansion.coeffs, pts):
        v += c * coherent_vector(b, D)
    k = coherent_vector(alpha, D) * kerr_phase(D, kappa)
    return float(np.linalg.norm(v - k))
