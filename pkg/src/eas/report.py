"""Report emission: JSON, text tables, CSV plot data, and PNG figures.

JSON is the canonical machine-readable form; every wall-clock-derived
quantity lives under a "timing" subtree so determinism checks can exclude
exactly one branch. CSVs feed external plotting; the PNG renderers draw
the same data with matplotlib for a quick look.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import ACCURACY_FLOOR, EvalRecord
from .profiler import ComponentTiming, TokenGrowthPoint
from .search import ParetoReport, StabilityAnalysis

SCHEMA_VERSION = 1

_CONFIG_SCHEMA = {
    "oneOf": [
        {"type": "null"},
        {
            "type": "object",
            "required": ["stage", "sparsity", "aggregation", "cross_layer", "rng_seed"],
            "properties": {
                "stage": {"type": "integer", "minimum": 1},
                "sparsity": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "aggregation": {"enum": ["mean", "max", "min", "geometric_mean", "random"]},
                "cross_layer": {"type": "boolean"},
                "rng_seed": {"type": "integer"},
            },
        },
    ]
}

_RECORD_SCHEMA = {
    "type": "object",
    "required": ["config", "wer", "accuracy_ratio", "avg_generated_tokens",
                 "cap_hit_fraction", "n_examples", "failures", "timing"],
    "properties": {
        "config": _CONFIG_SCHEMA,
        "wer": {"type": "number", "minimum": 0},
        "accuracy_ratio": {"type": "number"},
        "avg_generated_tokens": {"type": "number", "minimum": 0},
        "cap_hit_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "n_examples": {"type": "integer", "minimum": 0},
        "failures": {"type": "array"},
        "timing": {
            "type": "object",
            "required": ["rtf", "speedup", "component_seconds"],
            "properties": {
                "rtf": {"type": "number", "minimum": 0},
                "speedup": {"type": "number", "minimum": 0},
                "component_seconds": {"type": "object"},
            },
        },
    },
}

PARETO_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "baseline", "records", "front", "admissible",
                 "top3", "no_admissible"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "baseline": _RECORD_SCHEMA,
        "records": {"type": "array", "items": _RECORD_SCHEMA},
        "front": {"type": "array", "items": _RECORD_SCHEMA},
        "admissible": {"type": "array", "items": _RECORD_SCHEMA},
        "top3": {"type": "array", "items": _RECORD_SCHEMA, "maxItems": 3},
        "no_admissible": {"type": "boolean"},
    },
}


def pareto_report_dict(report: ParetoReport, meta: dict | None = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "baseline": report.baseline.to_json_dict(),
        "records": [r.to_json_dict() for r in report.all_records if r.config is not None],
        "front": [r.to_json_dict() for r in report.front],
        "admissible": [r.to_json_dict() for r in report.admissible],
        "top3": [r.to_json_dict() for r in report.top3],
        "no_admissible": report.no_admissible,
    }
    if meta:
        doc["meta"] = meta
    return doc


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _label(record: EvalRecord) -> str:
    return "baseline" if record.config is None else record.config.label()


def pareto_table_text(report: ParetoReport) -> str:
    """Fixed-width text table in the usual top-3 reporting style."""
    lines = [
        f"{'config':<22}{'WER [%]':>10}{'(ratio)':>10}{'RTF':>10}{'(speedup)':>12}",
        "-" * 64,
    ]

    def row(r: EvalRecord) -> str:
        label = _label(r)
        if r.config is None:
            return f"{label:<22}{100 * r.wer:>10.3f}{'':>10}{r.rtf:>10.3f}{'':>12}"
        return (f"{label:<22}{100 * r.wer:>10.3f}{f'({r.accuracy_ratio:.3f})':>10}"
                f"{r.rtf:>10.3f}{f'({r.speedup:.3f}x)':>12}")

    lines.append(row(report.baseline))
    for r in report.top3:
        if r.config is not None:
            lines.append(row(r))
    if report.no_admissible:
        lines.append("no admissible configuration under the accuracy constraint")
    return "\n".join(lines) + "\n"


def write_scatter_csv(path, report: ParetoReport) -> None:
    """(wer, rtf) per configuration, with front/admissible membership flags."""
    front_ids = {id(r) for r in report.front}
    adm_ids = {id(r) for r in report.admissible}
    top_ids = {id(r) for r in report.top3}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "sparsity", "aggregation", "cross_layer", "wer", "rtf",
                    "accuracy_ratio", "speedup", "on_front", "admissible", "top3"])
        for r in report.all_records:
            cfg = r.config
            w.writerow([
                "" if cfg is None else cfg.stage,
                0.0 if cfg is None else cfg.sparsity,
                "" if cfg is None else cfg.aggregation,
                "" if cfg is None else int(cfg.cross_layer),
                f"{r.wer:.6f}", f"{r.rtf:.6f}",
                f"{r.accuracy_ratio:.6f}", f"{r.speedup:.6f}",
                int(id(r) in front_ids), int(id(r) in adm_ids), int(id(r) in top_ids),
            ])


def render_search_figure(path, report: ParetoReport) -> None:
    """WER/RTF scatter with the front, the accuracy bound, and the top-3."""
    fig, ax = plt.subplots(figsize=(7, 5))
    others = [r for r in report.all_records if r.config is not None]
    ax.scatter([r.rtf for r in others], [100 * r.wer for r in others],
               s=22, c="tab:blue", alpha=0.6, label="configurations")
    front = sorted(report.front, key=lambda r: r.rtf)
    ax.plot([r.rtf for r in front], [100 * r.wer for r in front],
            c="gray", lw=1, marker=".", label="Pareto front")
    base = report.baseline
    ax.scatter([base.rtf], [100 * base.wer], marker="s", s=90, c="black",
               label="baseline", zorder=5)
    bound = 100 * (1 - ACCURACY_FLOOR * (1 - base.wer))
    ax.axhline(bound, ls=":", c="black", lw=1,
               label=f"{ACCURACY_FLOOR:.0%} accuracy bound")
    if report.top3:
        ax.scatter([r.rtf for r in report.top3], [100 * r.wer for r in report.top3],
                   facecolors="none", edgecolors="red", s=160, label="top-3")
    ax.set_xlabel("RTF")
    ax.set_ylabel("WER [%]")
    ax.set_title("accuracy / speed trade-off")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_timing_csv(path, rows: list[dict]) -> None:
    """Per-repeat component timing rows.

    Row keys: config, repeat, stem_s, encoder_s, decoder_s, tokens, cap_hit.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "repeat", "stem_s", "encoder_s", "decoder_s",
                    "tokens", "cap_hit"])
        for row in rows:
            w.writerow([row["config"], row["repeat"], f"{row['stem_s']:.6f}",
                        f"{row['encoder_s']:.6f}", f"{row['decoder_s']:.6f}",
                        row["tokens"], int(row["cap_hit"])])


def timing_rows(label: str, timing: ComponentTiming, tokens: int,
                cap_hit: bool) -> list[dict]:
    return [
        {"config": label, "repeat": i, "stem_s": s, "encoder_s": e,
         "decoder_s": d, "tokens": tokens, "cap_hit": cap_hit}
        for i, (s, e, d) in enumerate(timing.samples)
    ]


def render_timing_figure(path, sweep: list[tuple[float, ComponentTiming]]) -> None:
    """Median component seconds vs sparsity."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    xs = [s for s, _ in sweep]
    for key, attr in [("stem", "stem_seconds"), ("encoder", "encoder_seconds"),
                      ("decoder", "decoder_seconds")]:
        ax.plot(xs, [getattr(t, attr) for _, t in sweep], marker="o", label=key)
    ax.set_xlabel("sparsity")
    ax.set_ylabel("median seconds per example")
    ax.set_title("runtime decomposition")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_token_growth_csv(path, baseline_avg: float,
                           points: list[TokenGrowthPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sparsity", "avg_tokens", "cap_hit_fraction", "baseline_avg_tokens"])
        for p in points:
            w.writerow([p.sparsity, f"{p.avg_tokens:.4f}",
                        f"{p.cap_hit_fraction:.4f}", f"{baseline_avg:.4f}"])


def render_token_growth_figure(path, baseline_avg: float,
                               points: list[TokenGrowthPoint]) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot([p.sparsity for p in points], [p.avg_tokens for p in points],
            marker="o", label="generated tokens")
    ax.axhline(baseline_avg, ls="--", c="gray", label="baseline average")
    ax.set_xlabel("sparsity")
    ax.set_ylabel("average tokens per example")
    ax.set_title("generation length vs sparsity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_stability_csv(path, analysis: StabilityAnalysis) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group_size", "n_groups", "mean_accuracy_ratio", "std_accuracy_ratio"])
        for p in analysis.points:
            w.writerow([p.group_size, p.n_groups, f"{p.mean:.6f}", f"{p.std:.6f}"])


def render_stability_figure(path, analysis: StabilityAnalysis) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    pts = sorted(analysis.points, key=lambda p: p.group_size)
    ax.errorbar([p.group_size for p in pts], [p.mean for p in pts],
                yerr=[p.std for p in pts], fmt="o-", capsize=4,
                mfc="white", label="mean accuracy ratio +/- 1 std")
    ax.set_xlabel("group size (examples)")
    ax.set_ylabel("accuracy ratio")
    ax.set_title("accuracy-ratio stability vs dataset size")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
