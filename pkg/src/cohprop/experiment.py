"""End-to-end runs: propagation with observable recording, oracle comparison,
Kerr expansion sweeps, and CSV/JSON emission."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__, fock, kernels
from .errors import ValidationError
from .gaussian import GaussianBranchSuperposition, expectation, expectation_coherent_fast
from .kerr import (CutoffPolicy, certified_general_bound, expand_finite_fourier,
                   expand_general, expand_two_term, two_term_error_bound)
from .models import ExperimentConfig
from .propagate import TruncationPolicy, propagate
from .sampler import mh_sample
from .state import norm


def _fmt(v):
    return repr(float(v))


def _rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([x if isinstance(x, (str, int)) else _fmt(x) for x in r])
    return buf.getvalue()


def _layer_times(circuit):
    t = [0.0]
    for layer, _ in circuit.layers:
        t.append(t[-1] + (layer.t if layer is not None else 0.0))
    return np.array(t)


def _record_layers(n_layers, every):
    idx = list(range(0, n_layers + 1, every))
    if idx[-1] != n_layers:
        idx.append(n_layers)
    return idx


def _versions():
    import scipy
    return {"cohprop": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernel_backend": kernels.backend_name()}


@dataclass
class ExperimentResult:
    times: np.ndarray
    labels: list
    values: np.ndarray  # (n_records, n_obs)
    report: object
    final_state: object
    samples: object = None
    timings: dict = field(default_factory=dict)
    config: ExperimentConfig | None = None

    def trajectories_csv(self) -> str:
        rows = [[t] + list(v) for t, v in zip(self.times, self.values)]
        return _rows_to_csv(["t"] + list(self.labels), rows)

    def meta(self) -> dict:
        d = {"config": None if self.config is None else self.config.to_dict(),
             "versions": _versions(), "timings": self.timings,
             "final_branches": int(self.report.records[-1].N)}
        if self.samples is not None:
            d["sampling"] = self.samples.meta()
        return d

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "trajectories.csv"), "w") as fh:
            fh.write(self.trajectories_csv())
        with open(os.path.join(out_dir, "report.csv"), "w") as fh:
            fh.write(self.report.to_csv())
        with open(os.path.join(out_dir, "meta.json"), "w") as fh:
            json.dump(self.meta(), fh, indent=2)
        if self.samples is not None:
            with open(os.path.join(out_dir, "samples.csv"), "w") as fh:
                fh.write(self.samples.to_csv())


def run_experiment(cfg: ExperimentConfig, sample=True) -> ExperimentResult:
    """Propagate, evaluating the observables every ``record_every`` layers
    (t = 0 and the final layer are always recorded).

    Norms in the report come from the same Gram pass as the observables, so
    a recorded layer costs one pass. When the circuit ends in Gaussian gates
    the final row is evaluated on the Gaussian-branch state.
    """
    circuit = cfg.circuit()
    obs = cfg.parsed_observables()
    times = _layer_times(circuit)
    L = len(circuit.layers)
    rec = set(_record_layers(L, cfg.record_every))
    values = {}
    norms = {}
    t_obs = [0.0]

    def cb(li, s):
        t0 = time.perf_counter()
        if li in rec and obs:
            v, n2 = expectation_coherent_fast(s, obs, return_norm=True)
            values[li] = v
            norms[li] = math.sqrt(max(n2, 0.0))
        else:
            norms[li] = norm(s)
        t_obs[0] += time.perf_counter() - t0

    t_start = time.perf_counter()
    final, report = propagate(circuit, cfg.initial_state(), cfg.method, cfg.truncation,
                              cfg.monitor, cfg.order, track_norm=False, callback=cb)
    t_total = time.perf_counter() - t_start
    for r in report.records:
        r.norm = norms[r.layer]
    if isinstance(final, GaussianBranchSuperposition) and obs:
        t0 = time.perf_counter()
        values[L] = expectation(final, obs)
        t_obs[0] += time.perf_counter() - t0
    idx = sorted(rec)
    vals = np.array([values[i] for i in idx]) if obs else np.zeros((len(idx), 0))
    samples = None
    t_samp = 0.0
    if sample and cfg.sampling is not None:
        t0 = time.perf_counter()
        samples = mh_sample(final, cfg.sampling)
        t_samp = time.perf_counter() - t0
    timings = {"evolution_s": t_total - t_obs[0], "observables_s": t_obs[0], "sampling_s": t_samp}
    return ExperimentResult(times[idx], cfg.observable_labels(), vals, report, final,
                            samples, timings, cfg)


def sample_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.sampling is None:
        raise ValidationError("config has no sampling section")
    return run_experiment(cfg)


# ------------------------------------------------------------ oracle side

def oracle_trajectories(cfg: ExperimentConfig, cutoff=None, steps=None, order=None):
    """Observable values from the dense Fock simulation at the record points."""
    circuit = cfg.circuit()
    if circuit.final_gaussian:
        raise ValidationError("oracle comparison does not support final Gaussian gates")
    d = cutoff or cfg.oracle_cutoff or 24
    obs = cfg.parsed_observables()
    L = len(circuit.layers)
    rec = set(_record_layers(L, cfg.record_every))
    psi0 = fock.encode_superposition(cfg.initial_state(), d)
    values = {}
    t_obs = [0.0]

    def cb(li, st):
        if li in rec:
            t0 = time.perf_counter()
            values[li] = [fock.expectation_fock(st, o) for o in obs]
            t_obs[0] += time.perf_counter() - t0

    t0 = time.perf_counter()
    final = fock.evolve_trotter(psi0, circuit, steps, order or cfg.order, callback=cb)
    t_total = time.perf_counter() - t0
    idx = sorted(rec)
    return (np.array([values[i] for i in idx]), final,
            {"evolution_s": t_total - t_obs[0], "observables_s": t_obs[0]})


@dataclass
class Comparison:
    times: np.ndarray
    labels: list
    coherent: np.ndarray
    oracle: np.ndarray
    timings: dict
    sweep: list | None = None  # [(S, N_final, [abs errors at final time], seconds)]
    report: object = None

    @property
    def errors(self):
        return np.abs(self.coherent - self.oracle)

    def errors_csv(self):
        head = ["t"]
        for l in self.labels:
            head += [f"coherent_{l}", f"oracle_{l}", f"abs_err_{l}"]
        rows = []
        for k, t in enumerate(self.times):
            row = [t]
            for j in range(len(self.labels)):
                row += [self.coherent[k, j], self.oracle[k, j], self.errors[k, j]]
            rows.append(row)
        return _rows_to_csv(head, rows)

    def timings_csv(self):
        rows = [[eng, self.timings[eng]["evolution_s"], self.timings[eng]["observables_s"]]
                for eng in ("coherent", "oracle")]
        return _rows_to_csv(["engine", "evolution_s", "observables_s"], rows)

    def sweep_csv(self):
        head = ["S", "N_final"] + [f"abs_err_{l}" for l in self.labels] + ["seconds"]
        rows = [[int(S), int(n)] + list(e) + [sec] for S, n, e, sec in (self.sweep or [])]
        return _rows_to_csv(head, rows)

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "errors.csv"), "w") as fh:
            fh.write(self.errors_csv())
        with open(os.path.join(out_dir, "timings.csv"), "w") as fh:
            fh.write(self.timings_csv())
        if self.sweep:
            with open(os.path.join(out_dir, "sweep_S.csv"), "w") as fh:
                fh.write(self.sweep_csv())
        with open(os.path.join(out_dir, "meta.json"), "w") as fh:
            json.dump({"versions": _versions(), "timings": self.timings,
                       "max_abs_error": float(self.errors.max()) if self.errors.size else 0.0},
                      fh, indent=2)


def compare_with_oracle(cfg: ExperimentConfig, cutoff=None, sweep_S=None) -> Comparison:
    """Run both engines on the same config; optionally sweep TopS(S) and
    report the final-time error per S."""
    res = run_experiment(cfg, sample=False)
    ref, _, ot = oracle_trajectories(cfg, cutoff)
    sweep_S = sweep_S if sweep_S is not None else cfg.sweep_S
    sweep = None
    if sweep_S:
        sweep = []
        for S in sweep_S:
            c2 = replace(cfg, truncation=TruncationPolicy.top_s(int(S)), sampling=None,
                         record_every=max(1, len(cfg.circuit().layers)))
            t0 = time.perf_counter()
            r2 = run_experiment(c2, sample=False)
            sec = time.perf_counter() - t0
            sweep.append((int(S), r2.report.records[-1].N, np.abs(r2.values[-1] - ref[-1]), sec))
    return Comparison(res.times, res.labels, res.values, ref,
                      {"coherent": {k: res.timings[k] for k in ("evolution_s", "observables_s")},
                       "oracle": ot}, sweep, res.report)


# ------------------------------------------------------------- Kerr sweep

SWEEP_COLUMNS = ["scheme", "kappa", "lambda", "terms", "error", "bound"]


def kerr_sweep(kappa_grid, lambda_grid, eps_grid=(1e-4, 1e-8), M=3):
    """Measured single-mode expansion errors against the exact Kerr state.

    Rows cover General at each eps, TwoTerm and FiniteFourier(M); the bound
    column is empty where no certified bound applies.
    """
    rows = []
    for kappa in kappa_grid:
        for lam in lambda_grid:
            a = math.sqrt(lam)
            for eps in eps_grid:
                e = expand_general(a, kappa, CutoffPolicy(eps))
                n_f = len(e) - 1
                rows.append([f"general_eps={eps:g}", kappa, lam, len(e),
                             fock.expansion_distance(a, kappa, e),
                             certified_general_bound(a, eps, n_f)])
            e = expand_two_term(a, kappa)
            rows.append(["two_term", kappa, lam, 2, fock.expansion_distance(a, kappa, e),
                         two_term_error_bound(lam, kappa)])
            e = expand_finite_fourier(a, kappa, M)
            rows.append([f"finite_fourier_M={M}", kappa, lam, len(e),
                         fock.expansion_distance(a, kappa, e), ""])
    return rows


def kerr_sweep_csv(rows):
    return _rows_to_csv(SWEEP_COLUMNS, rows)


# ---------------------------------------------------------- Trotter check

def trotter_deviation(params, steps, cutoff=24, order="dplo_first"):
    """||psi_Trotter(T) - exp(-i H T) psi(0)|| on the Fock oracle, vacuum input."""
    from .models import build_bose_hubbard
    p = replace(params, steps=int(steps))
    psi0 = fock.vacuum(cutoff, p.num_modes)
    tro = fock.evolve_trotter(psi0, build_bose_hubbard(p), order=order)
    H = fock.bose_hubbard_hamiltonian(p, cutoff)
    exact = fock.evolve_hamiltonian(psi0, H, p.T)
    return float(np.linalg.norm(tro.vector - exact.vector))


def trotter_order_ratio(params, steps=None, cutoff=24, order="dplo_first"):
    """deviation(dt) / deviation(dt/2); close to 2 for a first-order product formula."""
    n = params.steps if steps is None else int(steps)
    return trotter_deviation(params, n, cutoff, order) / trotter_deviation(params, 2 * n, cutoff, order)
