"""Acceptance criteria, one test per criterion.

Every test prints a single ``[criterion k] PASS|FAIL ...`` line; the lines
are collected and repeated in the terminal summary (see conftest.py).
Run directly with ``python tests/test_acceptance.py`` for the lines alone.
"""
import math
import time
from itertools import product

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from scipy.special import comb

from cohprop import dplo, fock
from cohprop.dplo import DploLayer
from cohprop.experiment import compare_with_oracle, trotter_order_ratio
from cohprop.gaussian import (PolynomialObservable, Squeeze, apply_gaussian_gate, cross_generating,
                              cross_moment, expectation, expectation_coherent_fast,
                              gaussian_norm_squared, lift_coherent)
from cohprop.kerr import (CutoffPolicy, FiniteFourier, KerrGate, TwoTerm, apply_kerr,
                          certified_general_bound, expand_general, expand_two_term,
                          poisson_cutoff, two_term_error_bound)
from cohprop.models import three_mode_benchmark
from cohprop.propagate import CircuitSpec, TruncationPolicy, propagate
from cohprop.sampler import (SamplerConfig, mh_sample, proposal_density, target_density_unnorm)
from cohprop.state import CoherentSuperposition, norm

RESULTS = []


def report(k, ok, detail):
    line = f"[criterion {k:>2}] {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def random_state(rng, m, N, amax=2.0):
    r = amax * np.sqrt(rng.random((N, m)))
    amps = r * np.exp(2j * np.pi * rng.random((N, m)))
    return CoherentSuperposition(rng.normal(size=N) + 1j * rng.normal(size=N), amps)


def random_monomial(rng, m, max_deg):
    while True:
        q = rng.integers(0, 3, m)
        s = rng.integers(0, 3, m)
        if 0 < q.sum() + s.sum() <= max_deg:
            return q, s


def monotone_nonincreasing(v, slack=0.0):
    v = np.asarray(v)
    return bool(np.all(np.diff(v) <= slack))


# ---------------------------------------------------------------- 1

def test_criterion_01_three_mode_benchmark():
    cfg = three_mode_benchmark(S=10_000, M=3)
    sweep = [2 ** k for k in range(6, 13)]
    t0 = time.perf_counter()
    cmp = compare_with_oracle(cfg, cutoff=24, sweep_S=sweep)
    runtime = time.perf_counter() - t0
    err = cmp.errors
    within = bool(len(cmp.times) == 11 and np.all(err <= 5e-2))
    sweep_err = np.array([e for _, _, e, _ in cmp.sweep])
    mono = [monotone_nonincreasing(sweep_err[:, j]) for j in range(sweep_err.shape[1])]
    ok = within and all(mono) and runtime <= 300
    maxerr = ", ".join(f"{l}={e:.3g}" for l, e in zip(cmp.labels, err.max(axis=0)))
    sw = "; ".join(f"{l}: " + " ".join(f"{v:.3g}" for v in sweep_err[:, j])
                   for j, l in enumerate(cmp.labels))
    report(1, ok, f"max |err| over 11 points: {maxerr} (tol 5e-2); "
                  f"T=1 error vs S=2^6..2^12 [{sw}] monotone={mono}; runtime {runtime:.1f}s")


# ---------------------------------------------------------------- 2

def test_criterion_02_poisson_cutoff():
    n = poisson_cutoff(2.0, 1e-9)
    report(2, n == 24, f"poisson_cutoff(2, 1e-9) = {n} (expected 24)")


# ---------------------------------------------------------------- 3

def test_criterion_03_general_certification():
    t0 = time.perf_counter()
    worst = 0.0
    bad = []
    for kappa, lam, eps in product([0.1, 0.5, 1.0, math.pi], [0.5, 1, 2, 4, 6], [1e-4, 1e-8]):
        a = math.sqrt(lam)
        e = expand_general(a, kappa, CutoffPolicy(eps))
        err = fock.expansion_distance(a, kappa, e)
        bound = certified_general_bound(a, eps, len(e) - 1)
        worst = max(worst, err / bound)
        if err > bound:
            bad.append((kappa, lam, eps, err, bound))
    report(3, not bad, f"40 grid points, max error/bound = {worst:.3g}, violations {len(bad)}; "
                       f"{time.perf_counter() - t0:.2f}s")


# ---------------------------------------------------------------- 4

def test_criterion_04_two_term_bound():
    worst = 0.0
    bad = 0
    for kappa, lam in product([0.005, 0.02, 0.04], [0.5, 1, 2, 4]):
        err = fock.expansion_distance(math.sqrt(lam), kappa, expand_two_term(math.sqrt(lam), kappa))
        b = two_term_error_bound(lam, kappa)
        worst = max(worst, err / b)
        bad += err > b
    ratios = []
    for kappa in (0.005, 0.02, 0.04):
        lam = 0.05
        err = fock.expansion_distance(math.sqrt(lam), kappa, expand_two_term(math.sqrt(lam), kappa))
        ratios.append(err / (kappa * lam * math.sqrt(8)))
    rok = all(0.5 <= r <= 1.5 for r in ratios)
    report(4, bad == 0 and rok,
           f"12 grid points, max error/bound = {worst:.5f}, violations {bad}; "
           f"small-lambda ratios at lambda=0.05: {', '.join(f'{r:.4f}' for r in ratios)} (in [0.5, 1.5])")


# ---------------------------------------------------------------- 5

def test_criterion_05_branch_count_law():
    L = 20
    chain = CircuitSpec(1, [(None, [KerrGate(0.02, 0)]) for _ in range(L)])
    parts = []
    ok = True
    for s in range(4):
        out, _ = propagate(chain, CoherentSuperposition.coherent([0.8]), TwoTerm(),
                           TruncationPolicy.sin_cutoff(s), track_norm=False)
        bound = int(sum(comb(L, q, exact=True) for q in range(s + 1)))
        ok &= out.num_branches == bound
        parts.append(f"s={s}: N={out.num_branches} bound={bound}")
    report(5, ok, "; ".join(parts) + " (no merging, equality required)")


# ---------------------------------------------------------------- 6

def test_criterion_06_norm_invariants():
    rng = np.random.default_rng(606)
    worst_ff = worst_dplo = 0.0
    chained = random_state(rng, 3, 4, amax=1.5)
    n_chain0 = norm(chained)
    for _ in range(100):
        m = int(rng.integers(1, 4))
        s = random_state(rng, m, int(rng.integers(1, 5)), amax=2.0)
        X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        layer = DploLayer(0.5 * (X + X.conj().T), rng.normal(size=m) + 1j * rng.normal(size=m),
                          float(rng.uniform(0.05, 1.0)))
        comp = dplo.compile_layer(layer)
        n0 = norm(s)
        s1 = dplo.apply(comp, s)
        worst_dplo = max(worst_dplo, abs(norm(s1) - n0) / n0)
        gate = KerrGate(float(rng.uniform(-math.pi, math.pi)), int(rng.integers(0, m)))
        s2 = apply_kerr(s1, gate, FiniteFourier(int(rng.integers(1, 4))))
        worst_ff = max(worst_ff, abs(norm(s2) - n0) / n0)
        # chained DPLO layers on one 3-mode state
        X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        chained = dplo.apply(dplo.compile_layer(DploLayer(0.5 * (X + X.conj().T),
                                                          0.3 * rng.normal(size=3), 0.2)), chained)
    drift = abs(norm(chained) - n_chain0) / n_chain0
    ok = worst_ff <= 1e-10 and worst_dplo <= 1e-10 and drift <= 1e-10
    report(6, ok, f"100 random layers: max rel. norm change DPLO {worst_dplo:.2e}, "
                  f"DPLO+FiniteFourier {worst_ff:.2e}, 100-layer DPLO chain drift {drift:.2e} (tol 1e-10)")


# ---------------------------------------------------------------- 7

_STENCILS = {  # fourth-order central differences: offsets, weights
    0: ([0], [1.0]),
    1: ([-2, -1, 1, 2], [1 / 12, -8 / 12, 8 / 12, -1 / 12]),
    2: ([-2, -1, 0, 1, 2], [-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12]),
    3: ([-3, -2, -1, 1, 2, 3], [1 / 8, -1.0, 13 / 8, -13 / 8, 1.0, -1 / 8]),
    4: ([-3, -2, -1, 0, 1, 2, 3], [-1 / 6, 2.0, -6.5, 28 / 3, -6.5, 2.0, -1 / 6]),
}


def fd_derivative(f, m, q, s, h):
    orders = list(q) + list(s)
    axes = [list(zip(*_STENCILS[o])) for o in orders]
    tot = 0.0
    for combo in product(*axes):
        xi = np.array([k * h for k, _ in combo], dtype=complex)
        tot += np.prod([c for _, c in combo]) * f(xi[:m], xi[m:])
    return tot / h ** sum(orders)


def test_criterion_07_readout_equivalence():
    rng = np.random.default_rng(707)
    e_fock = e_fast = e_jet = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 3))
        N = int(rng.integers(1, 5))
        st = random_state(rng, m, N, amax=2.0)
        q, sp = random_monomial(rng, m, 4)
        o = PolynomialObservable([(complex(rng.normal(), rng.normal()), q, sp)], m)
        g = expectation(lift_coherent(st), o)
        ref = fock.expectation_fock(fock.encode_superposition(st, 40 if m == 1 else 30), o)
        e_fock = max(e_fock, abs(g - ref))
        fast = expectation_coherent_fast(st, o)
        e_fast = max(e_fast, abs(fast - g) / max(1.0, abs(g)))
        br = lift_coherent(st).branches
        bi = br[int(rng.integers(0, N))]
        bj = apply_gaussian_gate(br[int(rng.integers(0, N))], Squeeze(0.2 * rng.normal(), 0))
        jet = cross_moment(bi, bj, q, sp)
        fd = fd_derivative(lambda x, p: cross_generating(bi, bj, x, p), m, q, sp, 1e-2)
        scale = max(abs(jet), 1e-6 * abs(cross_generating(bi, bj)))
        e_jet = max(e_jet, abs(jet - fd) / scale)
    ok = e_fock <= 1e-8 and e_fast <= 1e-10 and e_jet <= 1e-4
    report(7, ok, f"100 instances: max |coherent - Fock| {e_fock:.2e} (tol 1e-8), "
                  f"fast vs general {e_fast:.2e} (tol 1e-10), jet vs finite differences "
                  f"rel {e_jet:.2e} (tol 1e-4)")


# ---------------------------------------------------------------- 8

def test_criterion_08_sampler():
    cat = CoherentSuperposition.cat(2.0)
    batch = mh_sample(cat, SamplerConfig(n_shots=100_000, seed=11))
    grid = np.linspace(-9.0, 9.0, 40001)
    c = cumulative_trapezoid(target_density_unnorm(cat, grid[:, None]), grid, initial=0.0)
    c /= c[-1]
    ks = stats.kstest(batch.outcomes[:, 0], lambda x: np.interp(x, grid, c)).statistic

    one = mh_sample(CoherentSuperposition.coherent([0.8 - 0.5j]), SamplerConfig(n_shots=10_000, seed=3))

    rng = np.random.default_rng(808)
    env_ok = True
    worst = 0.0
    worst_born = 0.0
    for _ in range(20):
        st = random_state(rng, 2, 4)
        x = rng.normal(scale=2.5, size=(10_000, 2))
        P = target_density_unnorm(st, x)
        q = proposal_density(st, x)
        # branches here are unit norm, so c'_k = c_k
        P_norm = P / np.sum(np.abs(st.coeffs) ** 2)
        r = np.max(P_norm / (4 * q))
        worst = max(worst, r)
        worst_born = max(worst_born, np.max(P / gaussian_norm_squared(lift_coherent(st)) / (4 * q)))
        env_ok &= r <= 1 + 1e-12
    ok = ks <= 0.02 and one.acceptance_rate == 1.0 and env_ok
    report(8, ok, f"even cat alpha=2: KS {ks:.4f} (tol 0.02), acceptance {batch.acceptance_rate:.3f}; "
                  f"N=1 acceptance {one.acceptance_rate}; envelope max P_norm/(N q) = {worst:.4f} "
                  f"over 20 states x 1e4 points (Born-normalized max {worst_born:.4f})")


# ---------------------------------------------------------------- 9

def test_criterion_09_trotter_order():
    p = three_mode_benchmark().model
    t0 = time.perf_counter()
    r = trotter_order_ratio(p, cutoff=24)
    report(9, 1.7 <= r <= 2.3, f"deviation(dt)/deviation(dt/2) = {r:.4f} (in [1.7, 2.3]); "
                               f"{time.perf_counter() - t0:.1f}s")


# ---------------------------------------------------------------- 10

def test_criterion_10_lambda_growth():
    cfg = three_mode_benchmark(S=10_000)
    amax = {}

    def cb(li, s):
        amax[li] = float(np.max(np.abs(s.amps)))

    propagate(cfg.circuit(), cfg.initial_state(), cfg.method, cfg.truncation, order=cfg.order,
              track_norm=False, callback=cb)
    L = len(amax) - 1
    t = np.arange(L + 1) * cfg.model.dt
    y = np.array([amax[k] for k in range(L + 1)])
    fit = stats.linregress(t, y)
    r2 = fit.rvalue ** 2
    report(10, r2 >= 0.95, f"max|alpha| vs t: slope {fit.slope:.3f}, R^2 = {r2:.4f} (tol 0.95); "
                           f"max|alpha| at T=1 is {y[-1]:.3f}")


if __name__ == "__main__":
    import sys
    fails = 0
    for name, fn in sorted((k, v) for k, v in dict(globals()).items() if k.startswith("test_criterion")):
        try:
            fn()
        except AssertionError:
            fails += 1
    sys.exit(1 if fails else 0)
