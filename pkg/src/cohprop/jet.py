"""Truncated multivariate Taylor series (jets), batched over a leading axis.

Only what the moment computation needs: products, exponentials of series
without constant term, and extraction of derivatives.
"""
from __future__ import annotations

import math
from itertools import product

import numpy as np


class Jet:
    """coeffs[b, i1, ..., ik] is the coefficient of x1^i1 ... xk^ik in batch b."""

    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=complex)

    @property
    def shape(self):
        return self.c.shape[1:]

    @property
    def batch(self):
        return self.c.shape[0]

    @classmethod
    def zeros(cls, batch, degrees):
        return cls(np.zeros((batch,) + tuple(d + 1 for d in degrees), dtype=complex))

    @classmethod
    def constant(cls, value, degrees):
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        j = cls.zeros(value.shape[0], degrees)
        j.c[(slice(None),) + (0,) * len(degrees)] = value
        return j

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.c + other.c)
        out = self.c.copy()
        out[(slice(None),) + (0,) * (out.ndim - 1)] += other
        return Jet(out)

    def scale(self, s):
        s = np.asarray(s, dtype=complex)
        return Jet(self.c * s.reshape((-1,) + (1,) * (self.c.ndim - 1)))

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self.scale(other)
        a, b = self.c, other.c
        shape = a.shape[1:]
        out = np.zeros_like(a)
        for idx in product(*(range(n) for n in shape)):
            ai = a[(slice(None),) + idx]
            if not np.any(ai):
                continue
            dst = (slice(None),) + tuple(slice(i, None) for i in idx)
            src = (slice(None),) + tuple(slice(0, n - i) for i, n in zip(idx, shape))
            out[dst] += ai.reshape((-1,) + (1,) * len(shape)) * b[src]
        return Jet(out)

    def exp(self):
        """exp of the series; the constant term is factored out exactly."""
        zero = (slice(None),) + (0,) * (self.c.ndim - 1)
        c0 = self.c[zero].copy()
        f = Jet(self.c.copy())
        f.c[zero] = 0
        top = sum(n - 1 for n in self.shape)
        result = Jet.constant(np.ones(self.batch), [n - 1 for n in self.shape])
        term = Jet.constant(np.ones(self.batch), [n - 1 for n in self.shape])
        for p in range(1, top + 1):
            term = (term * f).scale(np.full(self.batch, 1.0 / p))
            result = result + term
        return result.scale(np.exp(c0))

    def derivative(self, orders):
        """d^orders at the origin: coefficient times prod(orders!)."""
        fac = math.prod(math.factorial(o) for o in orders)
        return self.c[(slice(None),) + tuple(orders)] * fac


def exp_quadratic(g, H, degrees):
    """Jet of exp(g.x + x.H.x/2) truncated to per-variable ``degrees``.

    g: (B, k), H: (B, k, k) symmetric. Variables with degree 0 are dropped
    before building the series.
    """
    g = np.asarray(g, dtype=complex)
    H = np.asarray(H, dtype=complex)
    k = len(degrees)
    f = Jet.zeros(g.shape[0], degrees)
    for a in range(k):
        if degrees[a] >= 1:
            idx = [0] * k
            idx[a] = 1
            f.c[(slice(None),) + tuple(idx)] += g[:, a]
        if degrees[a] >= 2:
            idx = [0] * k
            idx[a] = 2
            f.c[(slice(None),) + tuple(idx)] += 0.5 * H[:, a, a]
        for b in range(a + 1, k):
            if degrees[a] >= 1 and degrees[b] >= 1:
                idx = [0] * k
                idx[a] = 1
                idx[b] = 1
                f.c[(slice(None),) + tuple(idx)] += H[:, a, b]
    return f.exp()
