"""Event CSV and model/field JSON serialization.

CSV carries one event per row under an `x,y,t` header at full float
precision.  Model descriptors are JSON objects with background, k,
temporal, spatial and window blocks; tabulated background fields embed
their grid nodes and row-major values.
"""
from __future__ import annotations

import csv
import json
import math

import numpy as np

from .background import SpatialField, TemporalField
from .bayes import PosteriorSummary
from .model import (
    ConstantBackground,
    EventSequence,
    FitResult,
    GmmBetaBackground,
    HawkesModel,
    SeparableBackground,
    SpatialTrigger,
    TemporalTrigger,
    Window,
)

_HEADER = ("x", "y", "t")


def write_events_csv(path, data: EventSequence) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER)
        for x, y, t in zip(data.x, data.y, data.t):
            writer.writerow((format(x, ".17g"), format(y, ".17g"), format(t, ".17g")))


def read_events_csv(path) -> EventSequence:
    """Parse an event CSV; malformed rows raise with their 1-based line number."""
    xs: list[float] = []
    ys: list[float] = []
    ts: list[float] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and tuple(c.strip().lower() for c in row) == _HEADER:
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns, got {len(row)}")
            try:
                x, y, t = (float(c) for c in row)
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric value in {row!r}") from None
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(t)):
                raise ValueError(f"line {lineno}: non-finite coordinate")
            xs.append(x)
            ys.append(y)
            ts.append(t)
    return EventSequence.from_unsorted(np.array(xs), np.array(ys), np.array(ts))


def window_to_dict(window: Window) -> dict:
    return {
        "x_min": window.x_min,
        "x_max": window.x_max,
        "y_min": window.y_min,
        "y_max": window.y_max,
        "t_min": window.t_min,
        "t_max": window.t_max,
    }


def window_from_dict(d: dict) -> Window:
    return Window(**{key: float(d[key]) for key in ("x_min", "x_max", "y_min", "y_max", "t_min", "t_max")})


def temporal_field_to_dict(field: TemporalField) -> dict:
    return {"nodes": field.nodes.tolist(), "values": field.values.tolist()}


def temporal_field_from_dict(d: dict) -> TemporalField:
    return TemporalField(np.asarray(d["nodes"], dtype=float), np.asarray(d["values"], dtype=float))


def spatial_field_to_dict(field: SpatialField) -> dict:
    return {
        "x_nodes": field.x_nodes.tolist(),
        "y_nodes": field.y_nodes.tolist(),
        "values": field.values.ravel().tolist(),  # row-major over (x, y)
        "bandwidth": field.bandwidth,
    }


def spatial_field_from_dict(d: dict) -> SpatialField:
    x_nodes = np.asarray(d["x_nodes"], dtype=float)
    y_nodes = np.asarray(d["y_nodes"], dtype=float)
    values = np.asarray(d["values"], dtype=float).reshape(x_nodes.size, y_nodes.size)
    bw = d.get("bandwidth")
    return SpatialField(x_nodes, y_nodes, values, None if bw is None else float(bw))


def _background_to_dict(background) -> dict:
    if isinstance(background, ConstantBackground):
        return {"type": "constant", "mu": background.mu}
    if isinstance(background, SeparableBackground):
        return {
            "type": "separable",
            "mu": background.mu,
            "spatial_field": spatial_field_to_dict(background.spatial_field),
            "temporal_field": temporal_field_to_dict(background.temporal_field),
        }
    if isinstance(background, GmmBetaBackground):
        return {
            "type": "gmm-beta",
            "mu": background.mu,
            "means": [list(m) for m in background.means],
            "variances": [list(v) for v in background.variances],
            "weights": list(background.weights),
            "t_start": background.t_start,
            "t_end": background.t_end,
            "beta_a": background.beta_a,
            "beta_b": background.beta_b,
        }
    raise TypeError(f"unsupported background type: {type(background).__name__}")


def _background_from_dict(d: dict):
    kind = d.get("type")
    if kind == "constant":
        return ConstantBackground(float(d["mu"]))
    if kind == "separable":
        return SeparableBackground(
            float(d["mu"]),
            spatial_field_from_dict(d["spatial_field"]),
            temporal_field_from_dict(d["temporal_field"]),
        )
    if kind == "gmm-beta":
        return GmmBetaBackground(
            mu=float(d["mu"]),
            means=tuple(tuple(float(v) for v in m) for m in d["means"]),
            variances=tuple(tuple(float(v) for v in m) for m in d["variances"]),
            weights=tuple(float(w) for w in d["weights"]),
            t_start=float(d["t_start"]),
            t_end=float(d["t_end"]),
            beta_a=float(d.get("beta_a", 1.0)),
            beta_b=float(d.get("beta_b", 2.0)),
        )
    raise ValueError(f"unknown background type: {kind!r}")


def model_to_dict(model: HawkesModel, window: Window) -> dict:
    return {
        "background": _background_to_dict(model.background),
        "k": model.k,
        "temporal": {"kind": model.temporal.kind, "param": model.temporal.param},
        "spatial": {"kind": model.spatial.kind, "param": model.spatial.param},
        "window": window_to_dict(window),
    }


def model_from_dict(d: dict) -> tuple[HawkesModel, Window]:
    for key in ("background", "k", "temporal", "spatial", "window"):
        if key not in d:
            raise ValueError(f"model descriptor missing field {key!r}")
    model = HawkesModel(
        background=_background_from_dict(d["background"]),
        k=float(d["k"]),
        temporal=TemporalTrigger(d["temporal"]["kind"], float(d["temporal"]["param"])),
        spatial=SpatialTrigger(d["spatial"]["kind"], float(d["spatial"]["param"])),
    )
    return model, window_from_dict(d["window"])


def write_model_json(path, model: HawkesModel, window: Window) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, window), fh, indent=2)
        fh.write("\n")


def read_model_json(path) -> tuple[HawkesModel, Window]:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def fit_result_to_dict(result: FitResult) -> dict:
    est = result.estimate
    return {
        "estimate": {
            "mu": est.mu,
            "k": est.k,
            "temporal_param": est.temporal_param,
            "spatial_param": est.spatial_param,
        },
        "objective": result.objective,
        "evaluations": result.evaluations,
        "iterations": result.iterations,
        "converged": result.converged,
        "seconds": result.seconds,
        "notes": list(result.notes),
    }


def posterior_summary_to_dict(summary: PosteriorSummary) -> dict:
    mode, mean = summary.mode, summary.mean
    return {
        "mode": {
            "mu": mode.mu,
            "k": mode.k,
            "temporal_param": mode.temporal_param,
            "spatial_param": mode.spatial_param,
        },
        "mean": {
            "mu": mean.mu,
            "k": mean.k,
            "temporal_param": mean.temporal_param,
            "spatial_param": mean.spatial_param,
        },
        "sd": summary.sd.tolist(),
        "covariance_log_scale": summary.covariance.tolist(),
        "seconds": summary.seconds,
        "evaluations": summary.evaluations,
        "converged": summary.converged,
        "notes": list(summary.notes),
    }
