"""Exponent estimation and predicted-versus-measured verification.

Two independent measurements are taken for every sampled normal vector:

* the growth rate of ``|Ad(g^t) v|`` (Lyapunov exponent on the adjoint
  orbit), accumulated from per-step renormalized norms;
* the approach rate of the flag trajectory to the Morse component, with
  the distance computed by the nearest-point optimizer.

Both are read off as least-squares slopes over the second half of the run.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InputError, Overflow, ZeroVector
from .flagman import (
    DEFAULT_RESTARTS,
    ChartPoint,
    FlagPoint,
    Metric,
    MorseComponent,
    act,
    chart_point,
    morse_component,
    nearest_component_point,
    renormalize_anchor,
)
from .jordan import Flow, SortedFlow, sorted_flow
from .matcore import DEFAULT_CLUSTER_TOL
from .roots import (
    Equivariance,
    FlagType,
    SpectrumPrediction,
    WeylWord,
    equivariance_condition,
    predicted_spectrum,
    sample_stable_layer,
)

R2_GATE = 0.99
WINDOW_STABILITY = 2e-2
DISTANCE_FLOOR = 1e-13
AT_COMPONENT = 1e-12
DIVERGENCE_FACTOR = 1e6
# renormalization band of the chart trajectories
RENORM_LOW = 1e-6
RENORM_TARGET = 1e-4

LAYER_NOTE = (
    "layer i holds normal vectors whose largest populated root value is "
    "lambda_i: nonzero on lambda_i roots, arbitrary below, zero above"
)


class Status(enum.Enum):
    CONVERGED = "Converged"
    AT_COMPONENT = "AtComponent"
    DIVERGED = "Diverged"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class ExponentEstimate:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    samples: list[tuple[float, float]]
    status: Status
    tail_slope: float = math.nan

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def to_dict(self) -> dict:
        return {
            "slope": _json_float(self.slope),
            "intercept": _json_float(self.intercept),
            "r_squared": _json_float(self.r_squared),
            "tail_slope": _json_float(self.tail_slope),
            "window": [_json_float(self.window[0]), _json_float(self.window[1])],
            "status": self.status.value,
        }


def _json_float(v: float):
    return float(v) if math.isfinite(v) else None


def _linfit(ts: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    if len(ts) < 2:
        return math.nan, math.nan, 0.0
    slope, intercept = np.polyfit(ts, ys, 1)
    resid = ys - (slope * ts + intercept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    # a flat series is a perfect fit of a zero slope
    if ss_tot <= 1e-24 * len(ys):
        r2 = 1.0
    else:
        r2 = max(0.0, 1.0 - ss_res / ss_tot)
    return float(slope), float(intercept), r2


def fit_exponent(samples: list[tuple[float, float]], t_end: float) -> ExponentEstimate:
    """Slope of ``log`` values over ``[t_end / 2, t_end]`` with the convergence gate.

    Converged needs ``r^2 >= 0.99`` and agreement within ``2e-2`` with the
    slope over ``[3 t_end / 4, t_end]``.
    """
    arr = np.array(samples, dtype=float).reshape(-1, 2)
    ts, ys = arr[:, 0], arr[:, 1]
    lo = 0.5 * t_end
    sel = (ts >= lo - 1e-9) & (ts <= t_end + 1e-9)
    slope, intercept, r2 = _linfit(ts[sel], ys[sel])
    tail = (ts >= 0.75 * t_end - 1e-9) & (ts <= t_end + 1e-9)
    tail_slope = _linfit(ts[tail], ys[tail])[0]
    ok = (math.isfinite(slope) and r2 >= R2_GATE and math.isfinite(tail_slope)
          and abs(slope - tail_slope) <= WINDOW_STABILITY)
    return ExponentEstimate(slope, intercept, r2, (lo, t_end), list(map(tuple, arr.tolist())),
                            Status.CONVERGED if ok else Status.INCONCLUSIVE, tail_slope)


def _n_steps(horizon: float, step: float) -> int:
    if step <= 0 or horizon <= 0:
        raise InputError("horizon and step must be positive")
    return int(round(horizon / step))


def lyapunov_adjoint(f: Flow | SortedFlow, v, horizon: float = 50.0, step: float = 0.1) -> ExponentEstimate:
    """Growth rate of ``|Ad(g^t) v|``.

    A plain :class:`Flow` is stepped with the full matrix ``g^step``.  A
    :class:`SortedFlow` is stepped factor by factor, which keeps unpopulated
    root spaces exactly zero; use it whenever ``v`` decays while other
    directions expand.
    """
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ZeroVector("adjoint Lyapunov exponent of the zero vector")
    n_steps = _n_steps(horizon, step)
    if isinstance(f, SortedFlow):
        core = f.core_at(step)
        core_inv = np.where(f.mask, np.linalg.inv(core), 0.0)

        def advance(y):
            return f.adjoint(y, step, core, core_inv)
    else:
        g = f.at(step)
        g_inv = np.linalg.inv(g)

        def advance(y):
            return g @ y @ g_inv

    y = v / nrm
    acc = math.log(nrm)
    samples = [(0.0, acc)]
    for k in range(1, n_steps + 1):
        y = advance(y)
        r = np.linalg.norm(y)
        if not math.isfinite(r):
            raise Overflow("adjoint iterate overflowed; reduce the step")
        if r == 0:
            raise ZeroVector("adjoint iterate underflowed to zero")
        acc += math.log(r)
        y = y / r
        samples.append((k * step, acc))
    return fit_exponent(samples, n_steps * step)


def _as_split(f, conjugate: bool) -> SortedFlow:
    if isinstance(f, SortedFlow):
        return f
    return sorted_flow(f, conjugate=conjugate)


def nilpotent_ratio_check(f: Flow | SortedFlow, v, horizon: float = 80.0, step: float | None = None,
                          k=None) -> tuple[np.ndarray, np.ndarray]:
    """Ratios ``|Ad(g^t) v| / (e^{lambda t} t^l / l! |N^l Y|)`` along the run.

    ``v = Ad(k) X`` with ``X`` supported on root spaces; ``lambda`` is the
    largest root value in the support of ``X``, ``Y`` its top component and
    ``N = ad(k^-1 N_g k)`` the conjugated nilpotent operator.  A plain flow
    must already have diagonal hyperbolic part.  The ratios tend to 1.
    """
    sf = _as_split(f, conjugate=False)
    step = step or (1.0 if sf.flow.is_discrete else 0.1)
    v = np.asarray(v, dtype=float)
    k = np.eye(sf.n) if k is None else np.asarray(k, dtype=float)
    k_inv = np.linalg.inv(k)
    x = k_inv @ v @ k
    mu = sf.htype.mu
    values = mu[:, None] - mu[None, :]
    scale = np.max(np.abs(x))
    if scale == 0:
        raise ZeroVector("nilpotent ratio check of the zero vector")
    support = np.abs(x) > 1e-12 * scale
    lam = float(np.max(values[support]))
    top = support & (np.abs(values - lam) <= 1e-9 * max(1.0, np.max(np.abs(mu))))
    y = np.where(top, x, 0.0)

    nil = k_inv @ sf.nilpotent_part() @ k
    powers = [y]
    while len(powers) <= sf.n * sf.n:
        nxt = nil @ powers[-1] - powers[-1] @ nil
        if np.linalg.norm(nxt) <= 1e-10 * np.linalg.norm(y):
            break
        powers.append(nxt)
    ell = len(powers) - 1
    log_lead = math.log(np.linalg.norm(powers[ell])) - math.lgamma(ell + 1)

    est = lyapunov_adjoint(sf, v, horizon, step)
    ts = np.array([t for t, _ in est.samples[1:]])
    logs = np.array([val for _, val in est.samples[1:]])
    ratios = np.exp(logs - (lam * ts + ell * np.log(ts) + log_lead))
    return ts, ratios


def metric_exponent(f: Flow | SortedFlow, x: FlagPoint | ChartPoint, comp: MorseComponent,
                    horizon: float = 50.0, step: float = 0.1, restarts: int = DEFAULT_RESTARTS,
                    rng_seed=0, metric: Metric = "chordal") -> ExponentEstimate:
    """Approach rate of the trajectory of ``x`` to ``comp``.

    A :class:`FlagPoint` is advanced by the full flow matrix and the run
    stops once the distance drops below ``1e-13``; the slope is then taken
    over ``[t_end / 2, t_end]`` with ``t_end`` the earlier of the horizon and
    that floor time.

    A :class:`ChartPoint` ``exp(Y) k w b`` is advanced through the identity
    ``g^t exp(Y) k w b = exp(Ad(g^t) Y) g^t k w b`` with the split flow, and
    ``Y`` is rescaled whenever the distance leaves ``[1e-6, 1e-4]``,
    accumulating the logarithms of the measured distance ratios.  The slope
    then covers the full second half of the horizon and saddle components
    are not destabilized by rounding.
    """
    if isinstance(x, ChartPoint):
        return _metric_exponent_chart(_as_split(f, conjugate=False), x, comp, horizon, step,
                                      restarts, rng_seed, metric)
    flow = f.flow if isinstance(f, SortedFlow) else f
    n_steps = _n_steps(horizon, step)
    g = flow.at(step)
    d, q = nearest_component_point(x, comp, restarts, rng_seed, metric)
    samples = [(0.0, math.log(d) if d > 0 else -math.inf)]
    if d < AT_COMPONENT:
        return ExponentEstimate(math.nan, math.nan, 0.0, (0.0, 0.0), samples, Status.AT_COMPONENT)
    d_min = d
    t_end = n_steps * step
    status = None
    for k in range(1, n_steps + 1):
        x = act(g, x)
        d, q = nearest_component_point(x, comp, metric=metric, init=[q, np.eye(comp.n)])
        t = k * step
        if d < DISTANCE_FLOOR:
            t_end = (k - 1) * step
            break
        samples.append((t, math.log(d)))
        d_min = min(d_min, d)
        if d > DIVERGENCE_FACTOR * d_min:
            status = Status.DIVERGED
            t_end = t
            break
    est = fit_exponent(samples, t_end)
    if status is not None:
        est.status = status
    return est


def _metric_exponent_chart(sf: SortedFlow, x: ChartPoint, comp: MorseComponent, horizon: float,
                           step: float, restarts: int, rng_seed, metric: Metric) -> ExponentEstimate:
    n_steps = _n_steps(horizon, step)
    core = sf.core_at(step)
    core_inv = np.where(sf.mask, np.linalg.inv(core), 0.0)
    y = np.array(x.normal, dtype=float)
    anchor = renormalize_anchor(np.array(x.anchor, dtype=float), comp)
    base = comp.base_point

    def measure(y_, anchor_, init=None):
        pt = act(scipy.linalg.expm(y_) @ anchor_, base)
        if init is None:
            return nearest_component_point(pt, comp, restarts, rng_seed, metric)
        return nearest_component_point(pt, comp, metric=metric, init=init)

    d, q = measure(y, anchor)
    samples = [(0.0, math.log(d) if d > 0 else -math.inf)]
    if d < AT_COMPONENT:
        return ExponentEstimate(math.nan, math.nan, 0.0, (0.0, 0.0), samples, Status.AT_COMPONENT)
    offset = 0.0
    log_min = math.log(d)
    for k in range(1, n_steps + 1):
        y = sf.adjoint(y, step, core, core_inv)
        anchor = renormalize_anchor(core @ anchor, comp)
        d, q = measure(y, anchor, [anchor, core @ q])
        if d == 0 or not math.isfinite(d):
            raise Overflow(f"distance became {d} at step {k}")
        t = k * step
        log_d = offset + math.log(d)
        samples.append((t, log_d))
        log_min = min(log_min, log_d)
        if log_d - log_min > math.log(DIVERGENCE_FACTOR):
            est = fit_exponent(samples, t)
            est.status = Status.DIVERGED
            return est
        if d < RENORM_LOW or (d > 10 * RENORM_TARGET and offset != 0.0):
            y = y * (RENORM_TARGET / d)
            d_new, q = measure(y, anchor, [anchor, q])
            offset += math.log(d) - math.log(d_new)
    return fit_exponent(samples, n_steps * step)


@dataclass
class SampleResult:
    layer: int
    sample: int
    metric: ExponentEstimate
    adjoint: ExponentEstimate
    metric_error: float
    adjoint_error: float

    def to_dict(self) -> dict:
        return {
            "sample": self.sample,
            "metric": self.metric.to_dict(),
            "adjoint": self.adjoint.to_dict(),
            "metric_error": _json_float(self.metric_error),
            "adjoint_error": _json_float(self.adjoint_error),
        }


@dataclass
class LayerResult:
    layer: int
    lambda_pred: float
    tolerance: float
    estimates: list[SampleResult]
    max_abs_error: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "lambda": self.lambda_pred,
            "tolerance": self.tolerance,
            "max_abs_error": _json_float(self.max_abs_error),
            "pass": self.passed,
            "estimates": [e.to_dict() for e in self.estimates],
        }


@dataclass
class VerificationReport:
    prediction: SpectrumPrediction
    per_layer: list[LayerResult]
    condition: Equivariance
    notes: list[str] = field(default_factory=list)
    flow_kind: str = "continuous"
    mu: tuple[float, ...] = ()
    blocks: tuple[tuple[int, ...], ...] = ()
    flag_dims: tuple[int, ...] = ()
    weyl: tuple[int, ...] = ()
    settings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(layer.passed for layer in self.per_layer)

    def to_dict(self) -> dict:
        p = self.prediction
        return {
            "flow": {"kind": self.flow_kind, "n": len(self.mu)},
            "flag_dims": list(self.flag_dims),
            "weyl": [i + 1 for i in self.weyl],
            "hyperbolic_type": {
                "mu": [float(m) for m in self.mu],
                "blocks": [[i + 1 for i in b] for b in self.blocks],
            },
            "prediction": {
                "lambdas": list(p.lambdas),
                "multiplicities": list(p.multiplicities),
                "negative_part": list(p.negative_part),
                "root_sets": [[[r.i + 1, r.j + 1] for r in rs] for rs in p.root_sets],
                "excluded_zero_pairs": p.excluded_zero_pairs,
                "flag_dimension": p.flag_dimension,
            },
            "condition": self.condition.value,
            "settings": self.settings,
            "layers": [layer.to_dict() for layer in self.per_layer],
            "passed": self.passed,
            "notes": list(self.notes),
        }


def default_step(f: Flow) -> float:
    return 1.0 if f.is_discrete else 0.1


def verify_spectrum(f: Flow, ft: FlagType, w: WeylWord, samples_per_layer: int = 2,
                    horizon: float | None = None, step: float | None = None, tol: float = 0.1,
                    rng_seed: int = 0, metric: Metric = "chordal", rel_tol: float = 0.0,
                    restarts: int = DEFAULT_RESTARTS, magnitude: float = 1.0,
                    cluster_tol: float = DEFAULT_CLUSTER_TOL, workers: int = 1) -> VerificationReport:
    """Measure every stable layer of ``fix(H, w)`` and compare with the prediction.

    A layer passes when every metric and adjoint estimate converged and lies
    within ``max(tol, rel_tol * |lambda|)`` of the predicted value.  Samples
    are seeded by ``(rng_seed, layer, sample)`` so reports do not depend on
    ``workers``.
    """
    sf = sorted_flow(f, cluster_tol)
    h = sf.htype
    pred = predicted_spectrum(h, ft, w)
    condition = equivariance_condition(f, ft, w, cluster_tol=cluster_tol)
    step = step or default_step(f)
    if horizon is None:
        horizon = 50.0 if condition is Equivariance.CONFORMAL else 80.0
    notes = [LAYER_NOTE]
    if condition is Equivariance.NOT_GUARANTEED:
        notes.append("warning: the flow is neither conformal nor attractor-nested; measured slopes "
                     "may differ from the prediction")
    settings = {"horizon": horizon, "step": step, "tol": tol, "rel_tol": rel_tol, "seed": rng_seed,
                "samples_per_layer": samples_per_layer, "metric": metric, "restarts": restarts}
    report = VerificationReport(pred, [], condition, notes, f.kind, tuple(float(m) for m in h.mu),
                                h.blocks, ft.dims, w.perm, settings)
    if not pred.negative_layers:
        if pred.is_empty:
            notes.append("empty spectrum: the stable set equals the component, which is the whole manifold")
        else:
            notes.append("empty negative spectrum: the component is a repeller")
        return report

    comp = morse_component(h, ft, w)

    def run(task):
        layer, s = task
        rng = np.random.default_rng([rng_seed, layer, s])
        x0 = sample_stable_layer(h, ft, w, layer, magnitude, rng)
        k = comp.random_group_element(rng)
        chart = chart_point(comp, k, x0)
        me = metric_exponent(sf, chart, comp, horizon, step, restarts, rng, metric)
        la = lyapunov_adjoint(sf, chart.normal, horizon, step)
        lam = pred.lambdas[layer]
        return SampleResult(layer, s, me, la, abs(me.slope - lam), abs(la.slope - lam))

    tasks = [(layer, s) for layer in pred.negative_layers for s in range(samples_per_layer)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    for layer in pred.negative_layers:
        lam = pred.lambdas[layer]
        rows = [r for r in results if r.layer == layer]
        errs = [e for r in rows for e in (r.metric_error, r.adjoint_error)]
        max_err = max(errs) if all(math.isfinite(e) for e in errs) else math.inf
        layer_tol = max(tol, rel_tol * abs(lam))
        ok = all(r.metric.converged and r.adjoint.converged for r in rows) and max_err <= layer_tol
        report.per_layer.append(LayerResult(layer, lam, layer_tol, rows, max_err, ok))
    return report
