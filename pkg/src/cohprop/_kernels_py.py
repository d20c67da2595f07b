"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

# pairs handled per block in gram_matvec; bounds the (rows, n2, m) temporary
_BLOCK_PAIRS = 1 << 20


def gram_matvec(A1, A2, V, threads=1):
    """W = G V with G[i, j] = <A1[i]|A2[j]>, built one row block at a time."""
    A1 = np.ascontiguousarray(A1, dtype=np.complex128)
    A2 = np.ascontiguousarray(A2, dtype=np.complex128)
    V = np.ascontiguousarray(V, dtype=np.complex128)
    n1, m = A1.shape
    n2 = A2.shape[0]
    W = np.zeros((n1, V.shape[1]), dtype=np.complex128)
    if n1 == 0 or n2 == 0:
        return W
    rows = max(1, _BLOCK_PAIRS // max(1, n2 * m))
    for lo in range(0, n1, rows):
        a = A1[lo:lo + rows]
        d = a[:, None, :] - A2[None, :, :]
        re = -0.5 * (d.real ** 2 + d.imag ** 2).sum(axis=2)
        im = (a.conj() @ A2.T).imag
        del d
        G = np.exp(re + 1j * im)
        W[lo:lo + rows] = G @ V
    return W


def mh_chain(log_ratio, log_u):
    log_ratio = np.asarray(log_ratio, dtype=float)
    log_u = np.asarray(log_u, dtype=float)
    n = log_ratio.shape[0]
    out = np.zeros(n, dtype=np.int64)
    cur = 0
    n_acc = 0
    for k in range(1, n):
        if log_u[k] < log_ratio[k] - log_ratio[cur]:
            cur = k
            n_acc += 1
        out[k] = cur
    return out, n_acc


def gram_matvec_self(A, V):
    return gram_matvec(A, A, V)
