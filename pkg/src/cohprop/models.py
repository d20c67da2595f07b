"""Driven Bose-Hubbard circuits and experiment configuration.

This is the one place where physical Hamiltonian parameters are mapped to
gate parameters. With H = -J sum_<ij> (a_i^dag a_j + h.c.) - Delta sum n_i
+ (U/2) sum n_i^2 + sum (Omega_i a_i^dag + h.c.), one Trotter step of
length dt is the DPLO layer (K_ij = -J on edges, K_ii = -Delta, eta = Omega,
t = dt) followed by exp(i kappa n^2) on every mode with kappa = -U dt / 2.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .dplo import DploLayer
from .errors import ValidationError
from .gaussian import PolynomialObservable
from .kerr import FiniteFourier, KerrGate, TwoTerm, scheme_from_dict
from .propagate import CircuitSpec, MonitorConfig, TruncationPolicy
from .sampler import SamplerConfig
from .state import CoherentSuperposition


def all_to_all(m):
    return [tuple(e) for e in combinations(range(m), 2)]


def _cplx_list(v):
    return [[float(complex(z).real), float(complex(z).imag)] for z in v]


def _parse_cplx(v):
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    return complex(v)


@dataclass(eq=False)
class BoseHubbardParams:
    J: float
    U: float
    Delta: float
    Omega: np.ndarray
    edges: list
    T: float
    steps: int

    def __post_init__(self):
        self.Omega = np.atleast_1d(np.asarray(self.Omega, dtype=complex))
        m = self.Omega.size
        self.edges = [tuple(int(v) for v in e) for e in self.edges]
        if self.steps < 1 or int(self.steps) != self.steps:
            raise ValidationError("steps must be an integer >= 1")
        self.steps = int(self.steps)
        for i, j in self.edges:
            if i == j:
                raise ValidationError(f"self-edge ({i}, {j}) in topology")
            if not (0 <= i < m and 0 <= j < m):
                raise ValidationError(f"edge ({i}, {j}) references a mode outside 0..{m - 1}")
        if not np.isfinite(self.T) or self.T < 0:
            raise ValidationError("T must be finite and >= 0")

    @property
    def num_modes(self):
        return self.Omega.size

    @property
    def dt(self):
        return self.T / self.steps

    def to_dict(self):
        return {"type": "bose_hubbard", "J": self.J, "U": self.U, "Delta": self.Delta,
                "Omega": _cplx_list(self.Omega), "edges": [list(e) for e in self.edges],
                "T": self.T, "steps": self.steps}

    @classmethod
    def from_dict(cls, d):
        m = d.get("num_modes")
        om = d.get("Omega", 0.0)
        # scalar (or one [re, im] pair) broadcasts over num_modes; a list gives one entry per mode
        is_pair = isinstance(om, (list, tuple)) and len(om) == 2 and all(isinstance(t, (int, float)) for t in om)
        if isinstance(om, (list, tuple)) and not (is_pair and m is not None and m != 2):
            omega = [_parse_cplx(v) for v in om]
        else:
            if m is None:
                raise ValidationError("scalar Omega needs num_modes")
            omega = [_parse_cplx(om)] * int(m)
        m = len(omega)
        edges = d.get("edges")
        topo = d.get("topology")
        if edges is None:
            if topo in (None, "all_to_all", "all-to-all"):
                edges = all_to_all(m)
            elif topo == "chain":
                edges = [(k, k + 1) for k in range(m - 1)]
            else:
                raise ValidationError(f"unknown topology {topo!r}")
        return cls(float(d["J"]), float(d["U"]), float(d.get("Delta", 0.0)), omega, edges,
                   float(d["T"]), int(d["steps"]))


def bose_hubbard_coupling(p: BoseHubbardParams):
    m = p.num_modes
    K = -p.Delta * np.eye(m, dtype=complex)
    for i, j in p.edges:
        K[i, j] = -p.J
        K[j, i] = -p.J
    return K


def build_bose_hubbard(p: BoseHubbardParams) -> CircuitSpec:
    dt = p.dt
    layer = DploLayer(bose_hubbard_coupling(p), p.Omega, dt)
    kappa = -p.U * dt / 2
    gates = [KerrGate(kappa, k) for k in range(p.num_modes)] if p.U != 0 else []
    return CircuitSpec(p.num_modes, [(layer, list(gates)) for _ in range(p.steps)])


def parse_observable(spec, m):
    if isinstance(spec, PolynomialObservable):
        return spec
    if isinstance(spec, str):
        return PolynomialObservable.parse(spec, m)
    return PolynomialObservable.from_dict(spec, m)


def observable_label(spec, k):
    if isinstance(spec, str):
        return spec
    if isinstance(spec, dict) and spec.get("label"):
        return spec["label"]
    return f"obs{k}"


@dataclass(eq=False)
class ExperimentConfig:
    model: object  # BoseHubbardParams | CircuitSpec
    method: object = field(default_factory=lambda: FiniteFourier(3))
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy.none)
    observables: list = field(default_factory=list)
    sampling: SamplerConfig | None = None
    record_every: int = 1
    seed: int = 0
    initial: CoherentSuperposition | None = None
    order: str = "dplo_first"
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    oracle_cutoff: int | None = None
    sweep_S: list | None = None

    def __post_init__(self):
        if isinstance(self.method, dict):
            self.method = scheme_from_dict(self.method)
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")
        if self.truncation.variant == "sin_cutoff" and not isinstance(self.method, TwoTerm):
            raise ValidationError("SinCutoff truncation requires the TwoTerm scheme")
        if self.order not in ("dplo_first", "kerr_first"):
            raise ValidationError(f"unknown ordering {self.order!r}")
        m = self.num_modes
        if self.initial is not None and self.initial.num_modes != m:
            raise ValidationError("initial state mode count differs from the model")
        for k, o in enumerate(self.observables):
            parse_observable(o, m)

    @property
    def num_modes(self):
        return self.model.num_modes

    def circuit(self) -> CircuitSpec:
        if isinstance(self.model, BoseHubbardParams):
            return build_bose_hubbard(self.model)
        return self.model

    def initial_state(self):
        return self.initial if self.initial is not None else CoherentSuperposition.vacuum(self.num_modes)

    def parsed_observables(self):
        return [parse_observable(o, self.num_modes) for o in self.observables]

    def observable_labels(self):
        return [observable_label(o, k) for k, o in enumerate(self.observables)]

    def to_dict(self):
        if isinstance(self.model, BoseHubbardParams):
            model = self.model.to_dict()
        else:
            model = {"type": "circuit", **self.model.to_dict()}
        obs = [o if isinstance(o, (str, dict)) else o.to_dict() for o in self.observables]
        d = {
            "model": model,
            "method": self.method.to_dict(),
            "truncation": self.truncation.to_dict(),
            "observables": obs,
            "sampling": None if self.sampling is None else self.sampling.to_dict(),
            "record_every": self.record_every,
            "seed": self.seed,
            "initial": None if self.initial is None else self.initial.to_dict(),
            "order": self.order,
            "monitor": {"enabled": self.monitor.enabled,
                        "reference_eps_kerr": self.monitor.reference_eps_kerr},
            "oracle_cutoff": self.oracle_cutoff,
            "sweep_S": self.sweep_S,
        }
        return d

    @classmethod
    def from_dict(cls, d):
        md = d["model"]
        kind = md.get("type", "bose_hubbard")
        if kind == "bose_hubbard":
            model = BoseHubbardParams.from_dict(md)
        elif kind == "circuit":
            model = CircuitSpec.from_dict(md)
        else:
            raise ValidationError(f"unknown model type {kind!r}")
        samp = d.get("sampling")
        mon = d.get("monitor") or {}
        init = d.get("initial")
        return cls(
            model=model,
            method=scheme_from_dict(d.get("method", {"name": "finite_fourier", "M": 3})),
            truncation=TruncationPolicy.from_dict(d.get("truncation") or {}),
            observables=list(d.get("observables", [])),
            sampling=None if samp is None else SamplerConfig.from_dict(samp),
            record_every=int(d.get("record_every", 1)),
            seed=int(d.get("seed", 0)),
            initial=None if init is None else CoherentSuperposition.from_dict(init),
            order=d.get("order", "dplo_first"),
            monitor=MonitorConfig(bool(mon.get("enabled", False)),
                                  float(mon.get("reference_eps_kerr", 1e-8))),
            oracle_cutoff=d.get("oracle_cutoff"),
            sweep_S=d.get("sweep_S"),
        )

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def three_mode_benchmark(S=10_000, M=3) -> ExperimentConfig:
    """Three-mode all-to-all benchmark: J=0.8, U=0.8, Delta=0.6, Omega=1, T=1, 10 steps."""
    p = BoseHubbardParams(0.8, 0.8, 0.6, [1.0, 1.0, 1.0], all_to_all(3), 1.0, 10)
    return ExperimentConfig(p, FiniteFourier(M), TruncationPolicy.top_s(S),
                            ["X0", "X0X1", "X0P0sym"], oracle_cutoff=24)
