"""Plain-text results report. Deterministic by construction: no timestamps,
no absolute paths, fixed float formatting, fixed row order."""

from __future__ import annotations

from dataclasses import dataclass

from .fusion import FusionWeights


@dataclass
class ReportRow:
    network: str
    views: int
    metric: float


def render_report(title: str, dataset_line: str, settings: dict,
                  rows: list[ReportRow], fusion: FusionWeights | None,
                  fused_metric: float | None) -> str:
    lines = [title, f"dataset: {dataset_line}"]
    lines.append("settings: " + " ".join(f"{k}={settings[k]}" for k in sorted(settings)))
    lines.append("")
    name_w = max(len("network"), max((len(r.network) for r in rows), default=0),
                 len("fusion") if fusion else 0)
    lines.append(f"{'network':<{name_w}}  {'views':>5}  avg per-class accuracy")
    for r in rows:
        lines.append(f"{r.network:<{name_w}}  {r.views:>5}  {r.metric:.4f}")
    if fusion is not None and fused_metric is not None:
        lines.append(f"{'fusion':<{name_w}}  {'-':>5}  {fused_metric:.4f}")
        lines.append("")
        parts = " ".join(f"{c}={w:.2f}" for c, w in zip(fusion.components,
                                                        fusion.weights))
        lines.append(f"fusion weights: {parts}")
    return "\n".join(lines) + "\n"
