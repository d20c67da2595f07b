"""Layered forward propagation: DPLO sublayer, Kerr sublayer, truncation."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dplo as _dplo
from .errors import DimensionError, EmptyStateError, ValidationError
from .kerr import General, KerrGate, TwoTerm, apply_kerr, scheme_from_dict
from .state import CoherentSuperposition, inner_product, norm


@dataclass(eq=False)
class CircuitSpec:
    num_modes: int
    layers: list = field(default_factory=list)  # [(DploLayer, [KerrGate, ...]), ...]
    final_gaussian: list | None = None

    def __post_init__(self):
        for li, (layer, gates) in enumerate(self.layers):
            if layer is not None and layer.num_modes != self.num_modes:
                raise DimensionError(f"layer {li} acts on {layer.num_modes} modes, circuit has {self.num_modes}")
            for g in gates:
                if not 0 <= g.mode < self.num_modes:
                    raise DimensionError(f"layer {li}: Kerr gate on mode {g.mode}")

    def to_dict(self):
        d = {"num_modes": self.num_modes,
             "layers": [{"dplo": None if l is None else l.to_dict(),
                         "kerr": [g.to_dict() for g in gs]} for l, gs in self.layers]}
        if self.final_gaussian:
            from .gaussian import gate_to_dict
            d["final_gaussian"] = [gate_to_dict(g) for g in self.final_gaussian]
        return d

    @classmethod
    def from_dict(cls, d):
        layers = []
        for item in d.get("layers", []):
            lay = None if item.get("dplo") is None else _dplo.DploLayer.from_dict(item["dplo"])
            layers.append((lay, [KerrGate.from_dict(g) for g in item.get("kerr", [])]))
        fg = None
        if d.get("final_gaussian"):
            from .gaussian import gate_from_dict
            fg = [gate_from_dict(g) for g in d["final_gaussian"]]
        return cls(int(d["num_modes"]), layers, fg)


@dataclass(frozen=True)
class TruncationPolicy:
    variant: str = "none"  # "none" | "top_s" | "sin_cutoff"
    value: int | None = None

    def __post_init__(self):
        v = self.variant.lower().replace("-", "_")
        object.__setattr__(self, "variant", v)
        if v == "top_s":
            if self.value is None or self.value < 1:
                raise ValidationError("TopS needs S >= 1")
        elif v == "sin_cutoff":
            if self.value is None or self.value < 0:
                raise ValidationError("SinCutoff needs s >= 0")
        elif v != "none":
            raise ValidationError(f"unknown truncation variant {self.variant!r}")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def top_s(cls, S):
        return cls("top_s", int(S))

    @classmethod
    def sin_cutoff(cls, s):
        return cls("sin_cutoff", int(s))

    def to_dict(self):
        return {"variant": self.variant, "value": self.value}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("variant", "none"), d.get("value"))


@dataclass(frozen=True)
class MonitorConfig:
    enabled: bool = False
    reference_eps_kerr: float = 1e-8

    def __post_init__(self):
        if not 0 < self.reference_eps_kerr < 1:
            raise ValidationError("reference_eps_kerr must lie in (0, 1)")


@dataclass
class LayerRecord:
    layer: int
    N: int
    discarded_weight: float
    norm: float
    max_abs_alpha: float
    mean_abs_alpha: float
    min_abs_alpha: float
    # largest first-mode |alpha|^2 over branches
    lam: float
    ms: float
    monitor: float | None = None


REPORT_COLUMNS = ["layer", "N", "discarded_weight", "norm", "max_abs_alpha",
                  "mean_abs_alpha", "min_abs_alpha", "lambda", "ms"]


@dataclass
class PropagationReport:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def branch_counts(self):
        return [r.N for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = list(REPORT_COLUMNS)
        has_mon = any(r.monitor is not None for r in self.records)
        if has_mon:
            cols.append("monitor")
        w.writerow(cols)
        for r in self.records:
            row = [r.layer, r.N, repr(r.discarded_weight), repr(r.norm), repr(r.max_abs_alpha),
                   repr(r.mean_abs_alpha), repr(r.min_abs_alpha), repr(r.lam), f"{r.ms:.3f}"]
            if has_mon:
                row.append("" if r.monitor is None else repr(r.monitor))
            w.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"records": [asdict(r) for r in self.records]})


def _record(layer, s, discarded, ms, track_norm, monitor=None):
    a = np.abs(s.amps)
    return LayerRecord(
        layer=layer, N=s.num_branches, discarded_weight=float(discarded),
        norm=norm(s) if track_norm else float("nan"),
        max_abs_alpha=float(a.max()), mean_abs_alpha=float(a.mean()),
        min_abs_alpha=float(a.min()), lam=float(np.max(a[:, 0] ** 2)), ms=ms,
        monitor=monitor)


def truncate(s: CoherentSuperposition, policy: TruncationPolicy, weak_counts=None):
    """Apply a truncation policy. Returns (state, discarded_weight, kept_index)."""
    n = s.num_branches
    if policy.variant == "none":
        return s, 0.0, np.arange(n)
    w = np.abs(s.coeffs) ** 2
    if policy.variant == "top_s":
        if n <= policy.value:
            return s, 0.0, np.arange(n)
        order = np.argsort(-np.abs(s.coeffs), kind="stable")
        keep = order[:policy.value]
    else:
        if weak_counts is None:
            raise ValidationError("SinCutoff needs per-branch weak counts")
        weak_counts = np.asarray(weak_counts)
        if weak_counts.shape != (n,):
            raise DimensionError("weak_counts length must equal branch count")
        keep = np.flatnonzero(weak_counts <= policy.value)
    mask = np.ones(n, dtype=bool)
    mask[keep] = False
    discarded = float(w[mask].sum())
    if keep.size == 0:
        return None, discarded, keep
    return CoherentSuperposition(s.coeffs[keep], s.amps[keep]), discarded, keep


def monitor_step(weak_state: CoherentSuperposition, general_state: CoherentSuperposition) -> float:
    """sqrt(2 - 2 Re<gen|wk>) between the normalized states."""
    nw, ng = norm(weak_state), norm(general_state)
    if nw == 0 or ng == 0:
        raise ValidationError("zero-norm state in monitor")
    ov = inner_product(general_state, weak_state).real / (nw * ng)
    return float(np.sqrt(max(2.0 - 2.0 * ov, 0.0)))


def lambda_statistic(report: PropagationReport) -> float:
    if not report.records:
        raise ValidationError("empty report")
    return max(r.lam for r in report.records)


def _kerr_sublayer(s, gates, scheme, weak):
    for g in gates:
        s, weak = apply_kerr(s, g, scheme, weak, return_weak=True)
    return s, weak


def propagate(circuit: CircuitSpec, initial: CoherentSuperposition, scheme=None,
              trunc: TruncationPolicy | None = None, monitor: MonitorConfig | None = None,
              order: str = "dplo_first", track_norm: bool = True, callback=None):
    """Run every layer; returns (final_state, report).

    The final state is a Gaussian-branch superposition when the circuit has
    a final Gaussian sequence, otherwise the coherent superposition.
    ``callback(layer_index, state)`` is called after each layer (and for the
    initial state with index 0).
    """
    scheme = scheme if scheme is not None else General()
    if isinstance(scheme, dict):
        scheme = scheme_from_dict(scheme)
    trunc = trunc or TruncationPolicy.none()
    monitor = monitor or MonitorConfig()
    if initial.num_modes != circuit.num_modes:
        raise DimensionError(f"initial state has {initial.num_modes} modes, circuit has {circuit.num_modes}")
    if trunc.variant == "sin_cutoff" and not isinstance(scheme, TwoTerm):
        raise ValidationError("SinCutoff truncation is defined only for the TwoTerm scheme")
    if order not in ("dplo_first", "kerr_first"):
        raise ValidationError(f"unknown ordering {order!r}")

    s = initial
    weak = np.zeros(s.num_branches, dtype=np.int64)
    report = PropagationReport()
    report.records.append(_record(0, s, 0.0, 0.0, track_norm))
    if callback is not None:
        callback(0, s)
    compiled = {}
    ref_scheme = General(monitor.reference_eps_kerr)
    for li, (layer, gates) in enumerate(circuit.layers, start=1):
        t0 = time.perf_counter()
        if layer is not None:
            key = id(layer)
            if key not in compiled:
                compiled[key] = (layer, _dplo.compile_layer(layer))
            cl = compiled[key][1]
        else:
            cl = None
        if order == "dplo_first" and cl is not None:
            s = _dplo.apply(cl, s)
        pre_kerr = s
        s, weak = _kerr_sublayer(s, gates, scheme, weak)
        s_trunc, discarded, keep = truncate(s, trunc, weak)
        if s_trunc is None:
            raise EmptyStateError("truncation removed every branch", layer=li)
        s, weak = s_trunc, weak[keep]
        mon = None
        if monitor.enabled and gates:
            ref, _ = _kerr_sublayer(pre_kerr, gates, ref_scheme, None)
            mon = monitor_step(s, ref)
        if order == "kerr_first" and cl is not None:
            s = _dplo.apply(cl, s)
        ms = 1e3 * (time.perf_counter() - t0)
        report.records.append(_record(li, s, discarded, ms, track_norm, mon))
        if callback is not None:
            callback(li, s)
    if circuit.final_gaussian:
        from .gaussian import apply_gate_sequence, lift_coherent
        return apply_gate_sequence(lift_coherent(s), circuit.final_gaussian), report
    return s, report
