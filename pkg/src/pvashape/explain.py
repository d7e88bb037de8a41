"""Interpretability: per-instance shapelet match evidence.

For each instance the report lists, per shapelet of the predicted class
(or of every class on request), where the shapelet matched best, how far
the match is, and both the shapelet and the matched window values, so the
evidence behind a prediction can be plotted or audited directly.
"""
from __future__ import annotations

import json

import numpy as np

from .core import Dataset, ShapeletPool, ValidationError
from .distance import psd
from .features import apply_scaler, instance_features
from .model import ModelCheckpoint, forward


def build_explain_report(dataset: Dataset, checkpoint: ModelCheckpoint,
                         pool: ShapeletPool, all_classes: bool = False,
                         instance_id: str | None = None) -> dict:
    """Prediction plus best-match evidence for each requested instance.

    Shapelets longer than an instance's unpadded region cannot match and
    are omitted from that instance's entries. Distances come from the same
    search used everywhere else, so they agree with the feature transform
    exactly. The unpadded waveforms ride along so the report is
    self-contained for plotting.
    """
    cfg = checkpoint.config
    instances = list(dataset)
    if instance_id is not None:
        instances = [x for x in instances if x.id == instance_id]
        if not instances:
            raise ValidationError(f"instance {instance_id!r} not found")
    out = []
    for x in instances:
        z_raw = instance_features(x, pool if cfg.use_shapelet_features else None,
                                  cfg.logsig_depth,
                                  include_shapelets=cfg.use_shapelet_features,
                                  znorm=cfg.znorm).z
        z = apply_scaler(z_raw[None, :], checkpoint.scaler)[0] if checkpoint.scaler else z_raw
        probs = forward(checkpoint.params, z)
        pred_idx = int(np.argmax(probs))
        predicted = checkpoint.classes[pred_idx]
        matches = []
        for j, s in enumerate(pool.shapelets):
            if not all_classes and s.label != predicted:
                continue
            if len(s) > x.original_length:
                continue
            m = psd(x, s.channel, s.values, znorm=cfg.znorm)
            matches.append({
                "shapelet": f"S{j:03d}",
                "pool_index": j,
                "label": s.label,
                "channel": int(s.channel),
                "channel_name": x.channel_names[s.channel],
                "offset": int(m.offset),
                "psd": float(m.psd),
                "shapelet_values": [float(v) for v in s.values],
                "window_values": [float(v) for v in m.window],
            })
        out.append({
            "id": x.id,
            "label": x.label,
            "predicted": predicted,
            "probabilities": {lab: float(p) for lab, p in zip(checkpoint.classes, probs)},
            "series": {name: [float(v) for v in x.channel(i)]
                       for i, name in enumerate(x.channel_names)},
            "matches": matches,
        })
    return {"classes": list(checkpoint.classes), "all_classes": bool(all_classes),
            "instances": out}


def emit_plot_data(report: dict, out_path) -> None:
    """Write one JSON document per instance with aligned series/overlays.

    Overlay index 0 sits at the match offset on the overlay's channel;
    every document is directly consumable by a plotting tool.
    """
    try:
        with open(out_path, "w") as fh:
            for entry in report["instances"]:
                doc = {
                    "id": entry["id"],
                    "label": entry["label"],
                    "predicted": entry["predicted"],
                    "time": list(range(len(next(iter(entry["series"].values()))))),
                    "series": entry["series"],
                    "overlays": [
                        {
                            "shapelet": m["shapelet"],
                            "label": m["label"],
                            "channel": m["channel"],
                            "channel_name": m["channel_name"],
                            "offset": m["offset"],
                            "psd": m["psd"],
                            "values": m["shapelet_values"],
                        }
                        for m in entry["matches"]
                    ],
                }
                fh.write(json.dumps(doc) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write plot data to {out_path}: {exc}") from exc
