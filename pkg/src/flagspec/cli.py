"""``flagspec`` command line front end.

Problem files are YAML mappings::

    time: continuous          # or discrete
    matrix: [[1, 0], [0, -1]]
    flag_dims: [1]            # default: full flag
    weyl: [1, 2]              # 1-based images, default: identity
    horizon: 25
    step: 0.05
    samples: 2
    tol: 0.05
    seed: 0
    metric: chordal           # or principal_angles
    reverse: false

Exit codes: 0 pass, 1 verification failure, 2 input error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import FlagspecError, InputError, NumericalError
from .jordan import Flow, hyperbolic_type, is_conformal, jordan
from .matcore import DEFAULT_CLUSTER_TOL, as_square
from .roots import (
    FlagType,
    WeylWord,
    equivariance_condition,
    flag_spectrum,
    predicted_spectrum,
    sigma_h,
)
from .spectra import VerificationReport, verify_spectrum

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

_KEYS = {"time", "matrix", "flag_dims", "weyl", "horizon", "step", "samples", "tol", "rel_tol",
         "seed", "metric", "reverse", "cluster_tol", "restarts", "workers"}
_METRICS = {"chordal": "chordal", "principal_angles": "principal_angles", "angles": "principal_angles"}


@dataclass
class ProblemSpec:
    time: str
    matrix: np.ndarray
    flag_dims: tuple[int, ...]
    weyl: tuple[int, ...]
    horizon: float | None = None
    step: float | None = None
    samples: int = 2
    tol: float = 0.1
    rel_tol: float = 0.0
    seed: int = 0
    metric: str = "chordal"
    reverse: bool = False
    cluster_tol: float = DEFAULT_CLUSTER_TOL
    restarts: int = 16
    workers: int = 1

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_mapping(cls, data) -> "ProblemSpec":
        if not isinstance(data, dict):
            raise InputError("problem file must be a mapping")
        unknown = set(data) - _KEYS
        if unknown:
            raise InputError(f"unknown keys: {sorted(unknown)}")
        for key in ("time", "matrix"):
            if key not in data:
                raise InputError(f"missing required key '{key}'")
        time = str(data["time"])
        if time not in ("discrete", "continuous"):
            raise InputError(f"time must be 'discrete' or 'continuous', got {time!r}")
        try:
            matrix = as_square(data["matrix"])
        except (TypeError, ValueError) as exc:
            raise InputError(f"matrix: {exc}") from exc
        n = matrix.shape[0]
        dims = tuple(int(d) for d in data.get("flag_dims", range(1, n)))
        weyl = tuple(int(i) for i in data.get("weyl", range(1, n + 1)))
        if sorted(weyl) != list(range(1, n + 1)):
            raise InputError(f"weyl must be a permutation of 1..{n}, got {list(weyl)}")
        metric = _METRICS.get(str(data.get("metric", "chordal")))
        if metric is None:
            raise InputError(f"metric must be one of {sorted(_METRICS)}")
        spec = cls(time, matrix, dims, weyl, metric=metric)
        for key in ("horizon", "step", "tol", "rel_tol", "cluster_tol"):
            if data.get(key) is not None:
                setattr(spec, key, float(data[key]))
        for key in ("samples", "seed", "restarts", "workers"):
            if key in data:
                setattr(spec, key, int(data[key]))
        spec.reverse = bool(data.get("reverse", False))
        for key in ("horizon", "step"):
            v = getattr(spec, key)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise InputError(f"{key} must be positive")
        if spec.samples < 1 or spec.restarts < 1 or spec.workers < 1:
            raise InputError("samples, restarts and workers must be at least 1")
        FlagType(n, dims)
        return spec

    @classmethod
    def load(cls, path) -> "ProblemSpec":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise InputError(f"cannot parse {path}: {exc}") from exc
        return cls.from_mapping(data)

    def flow(self) -> Flow:
        f = Flow(self.time, self.matrix)
        return f.inverse() if self.reverse else f

    def flag_type(self) -> FlagType:
        return FlagType(self.n, self.flag_dims)

    def weyl_word(self) -> WeylWord:
        return WeylWord.from_images(self.weyl)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _fmt_set(values) -> str:
    return "{" + ", ".join(_fmt(v) for v in values) + "}"


def _matrix_lines(name: str, m: np.ndarray) -> list[str]:
    rows = np.array2string(np.asarray(m), precision=8, suppress_small=True, max_line_width=200)
    return [f"{name} ="] + ["  " + line for line in rows.splitlines()]


def cmd_jordan(spec: ProblemSpec, as_json: bool = False) -> int:
    f = spec.flow()
    tri = jordan(f, spec.cluster_tol)
    h = hyperbolic_type(f, spec.cluster_tol)
    conformal = is_conformal(f, cluster_tol=spec.cluster_tol)
    sig = sorted(d for d in sigma_h(h))
    names = ("e", "h", "u") if f.is_discrete else ("E", "H", "N")
    if as_json:
        out = {
            "kind": f.kind,
            names[0]: tri.elliptic.tolist(),
            names[1]: tri.hyperbolic.tolist(),
            names[2]: tri.unipotent.tolist(),
            "mu": h.mu.tolist(),
            "blocks": [[i + 1 for i in b] for b in h.blocks],
            "sigma_h": sig,
            "conformal": conformal,
        }
        print(json.dumps(out, sort_keys=True, indent=2))
        return EXIT_OK
    lines = []
    for name, m in zip(names, (tri.elliptic, tri.hyperbolic, tri.unipotent)):
        lines += _matrix_lines(name, m)
    lines.append("μ = (" + ", ".join(_fmt(m) for m in h.mu) + ")")
    lines.append("blocks = " + str([[i + 1 for i in b] for b in h.blocks]))
    lines.append("Σ(H) = {" + ", ".join(str(d) for d in sig) + "}")
    lines.append(f"conformal: {str(conformal).lower()}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_predict(spec: ProblemSpec, show_flag_spectrum: bool = False, as_json: bool = False) -> int:
    f = spec.flow()
    h = hyperbolic_type(f, spec.cluster_tol)
    ft, w = spec.flag_type(), spec.weyl_word()
    pred = predicted_spectrum(h, ft, w)
    cond = equivariance_condition(f, ft, w, cluster_tol=spec.cluster_tol)
    fs = flag_spectrum(f, spec.cluster_tol) if show_flag_spectrum else None
    if as_json:
        out = {
            "lambdas": list(pred.lambdas),
            "multiplicities": list(pred.multiplicities),
            "negative_part": list(pred.negative_part),
            "excluded_zero_pairs": pred.excluded_zero_pairs,
            "flag_dimension": pred.flag_dimension,
            "condition": cond.value,
        }
        if fs is not None:
            out["flag_spectrum"] = list(fs)
        print(json.dumps(out, sort_keys=True, indent=2))
        return EXIT_OK
    if pred.is_empty:
        lines = ["Λ = ∅ (single Morse component is the whole manifold)"]
    else:
        lines = [f"Λ = {_fmt_set(pred.lambdas)}",
                 "multiplicities = (" + ", ".join(str(m) for m in pred.multiplicities) + ")"]
    lines.append(f"Λ⁻ = {_fmt_set(pred.negative_part)}" if pred.negative_part else "Λ⁻ = ∅")
    if fs is not None:
        lines.append(f"flag spectrum = {_fmt_set(fs)}" if fs else "flag spectrum = ∅")
    lines.append(f"equivariance: {cond.value}")
    print("\n".join(lines))
    return EXIT_OK


def _csv_value(v) -> str:
    return "nan" if v is None else format(v, ".17g")


def write_outputs(report: VerificationReport, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    written = [report_path]
    for layer in report.per_layer:
        for s in layer.estimates:
            metric = {t: y for t, y in s.metric.samples}
            adjoint = {t: y for t, y in s.adjoint.samples}
            times = sorted(set(metric) | set(adjoint))
            lines = ["t,log_distance,log_adjoint_norm"]
            for t in times:
                lines.append(",".join((_csv_value(t), _csv_value(metric.get(t)), _csv_value(adjoint.get(t)))))
            path = out_dir / f"curve_{layer.layer + 1}_{s.sample + 1}.csv"
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
    return written


def cmd_verify(spec: ProblemSpec, out_dir: Path, as_json: bool = False) -> int:
    report = verify_spectrum(
        spec.flow(), spec.flag_type(), spec.weyl_word(),
        samples_per_layer=spec.samples, horizon=spec.horizon, step=spec.step, tol=spec.tol,
        rng_seed=spec.seed, metric=spec.metric, rel_tol=spec.rel_tol, restarts=spec.restarts,
        cluster_tol=spec.cluster_tol, workers=spec.workers,
    )
    write_outputs(report, out_dir)
    if as_json:
        print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    else:
        lines = []
        for layer in report.per_layer:
            slopes = ", ".join(f"{s.metric.slope:.6f}/{s.adjoint.slope:.6f}" for s in layer.estimates)
            verdict = "PASS" if layer.passed else "FAIL"
            lines.append(f"λ = {_fmt(layer.lambda_pred)}  metric/adjoint slopes: {slopes}  "
                         f"max error {layer.max_abs_error:.3g} (tol {layer.tolerance:g})  {verdict}")
        lines += [f"note: {n}" for n in report.notes[1:]]
        lines.append(f"report written to {out_dir / 'report.json'}")
        print("\n".join(lines))
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flagspec", description="Lyapunov spectra of linear flows on flag manifolds")
    p.add_argument("command", choices=("jordan", "predict", "verify"))
    p.add_argument("-i", "--input", required=True, help="YAML problem file")
    p.add_argument("-o", "--output", default="flagspec_out", help="output directory for verify")
    p.add_argument("--tol", type=float, help="absolute slope tolerance (overrides the file)")
    p.add_argument("--metric", choices=("chordal", "angles"), help="flag distance (overrides the file)")
    p.add_argument("--flag-spectrum", action="store_true", help="also print the maximal flag spectrum")
    p.add_argument("--reverse", action="store_true", help="use the inverse flow")
    p.add_argument("--seed", type=int, help="random seed (overrides the file)")
    p.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ProblemSpec.load(args.input)
        if args.tol is not None:
            spec.tol = args.tol
        if args.metric is not None:
            spec.metric = _METRICS[args.metric]
        if args.seed is not None:
            spec.seed = args.seed
        if args.reverse:
            spec.reverse = True
        if args.command == "jordan":
            return cmd_jordan(spec, args.json)
        if args.command == "predict":
            return cmd_predict(spec, args.flag_spectrum, args.json)
        return cmd_verify(spec, Path(args.output), args.json)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FlagspecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
