"""Command-line surface.

Commands:
    gen-fixtures   write a toy model + synthetic dataset
    run            evaluate the baseline or one (stage, sparsity) config
    search         grid search, Pareto report, top-3 selection
    profile        per-component timing and token-growth sweeps
    stability      accuracy-ratio spread vs evaluation-set size

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 no admissible
configuration (search with --require-admissible only).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, DataError
from . import fixtures, report
from .dataset import load_manifest
from .evaluate import collect_correctness, evaluate_config
from .model import load_model
from .profiler import timed_dataset_pass, token_growth_curve
from .search import (
    DEFAULT_SPARSITIES,
    SearchGrid,
    run_grid,
    select_constrained,
    stability_analysis,
)
from .sparsify import AGGREGATIONS, EasConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NO_ADMISSIBLE = 4


def parse_grid(spec: str, n_encoder_layers: int) -> SearchGrid:
    """Parse 'stages=1..L;sparsities=0.0:0.9:0.1' (ranges or comma lists)."""
    stages: tuple[int, ...] | None = None
    sparsities: tuple[float, ...] | None = None
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"grid field {part!r} is not key=value")
        key, value = part.split("=", 1)
        key = key.strip()
        if key == "stages":
            stages = _parse_stages(value.strip(), n_encoder_layers)
        elif key == "sparsities":
            sparsities = _parse_sparsities(value.strip())
        else:
            raise ConfigError(f"unknown grid field {key!r} (use stages/sparsities)")
    return SearchGrid(
        stages=stages if stages is not None else tuple(range(1, n_encoder_layers + 1)),
        sparsities=sparsities if sparsities is not None else DEFAULT_SPARSITIES,
    )


def _parse_stages(value: str, depth: int) -> tuple[int, ...]:
    def one(tok: str) -> int:
        tok = tok.strip()
        if tok == "L":
            return depth
        try:
            return int(tok)
        except ValueError:
            raise ConfigError(f"grid stage {tok!r} is not an integer or 'L'") from None

    if ".." in value:
        lo, hi = value.split("..", 1)
        lo_i, hi_i = one(lo), one(hi)
        if lo_i > hi_i:
            raise ConfigError(f"empty stage range {value!r}")
        return tuple(range(lo_i, hi_i + 1))
    return tuple(one(tok) for tok in value.split(","))


def _parse_sparsities(value: str) -> tuple[float, ...]:
    try:
        if ":" in value:
            lo_s, hi_s, step_s = value.split(":")
            lo, hi, step = float(lo_s), float(hi_s), float(step_s)
            if step <= 0 or hi < lo:
                raise ConfigError(f"bad sparsity range {value!r}")
            out = []
            i = 0
            while True:
                s = round(lo + i * step, 10)
                if s > hi + 1e-12:
                    break
                out.append(s)
                i += 1
            return tuple(out)
        return tuple(float(tok) for tok in value.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse sparsities {value!r}") from None


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="path to model.json")
    p.add_argument("--manifest", required=True, help="path to manifest.jsonl")
    p.add_argument("--limit", type=int, default=None,
                   help="use only the first N manifest examples")
    p.add_argument("--max-new-tokens", type=int, default=None,
                   help="override the per-example decode budget")
    p.add_argument("--out", required=True, help="output directory")


def _add_eas_args(p: argparse.ArgumentParser, stage_required: bool = False) -> None:
    p.add_argument("--stage", type=int, required=stage_required,
                   help="encoder layer after which tokens are dropped")
    p.add_argument("--sparsity", type=float, default=None,
                   help="fraction of time tokens to drop, in [0, 1)")
    p.add_argument("--aggregation", choices=AGGREGATIONS, default="mean")
    p.add_argument("--cross-layer", action="store_true",
                   help="aggregate importance across all layers, drop at the last")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the random aggregation stream")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="eas", description=__doc__,
                                  formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = top.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-fixtures", help="write a toy model + synthetic dataset")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--preset", choices=sorted(fixtures.PRESETS), default="tiny")
    g.add_argument("--n-examples", type=int, default=32)
    g.add_argument("--scheme", choices=["echo", "random"], default="echo")
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="evaluate baseline or one configuration")
    _add_model_args(r)
    _add_eas_args(r)

    s = sub.add_parser("search", help="grid search + Pareto report")
    _add_model_args(s)
    s.add_argument("--grid", default=None,
                   help='e.g. "stages=1..L;sparsities=0.0:0.9:0.1"')
    s.add_argument("--aggregation", choices=AGGREGATIONS, default="mean")
    s.add_argument("--cross-layer", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--require-admissible", action="store_true",
                   help="exit 4 when no configuration meets the accuracy bound")
    s.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("profile", help="component timing + token growth sweep")
    _add_model_args(p)
    p.add_argument("--stage", type=int, required=True)
    p.add_argument("--grid", default=None,
                   help='sparsity sweep, e.g. "sparsities=0.0:0.9:0.1"')
    p.add_argument("--aggregation", choices=AGGREGATIONS, default="mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--no-figures", action="store_true")

    st = sub.add_parser("stability", help="accuracy-ratio spread vs group size")
    _add_model_args(st)
    _add_eas_args(st, stage_required=True)
    st.add_argument("--group-sizes", required=True,
                    help="comma list of group sizes, e.g. 10,50,100")
    st.add_argument("--shuffle-seed", type=int, default=None,
                    help="shuffle examples once before grouping")
    st.add_argument("--no-figures", action="store_true")
    return top


def _load(args) -> tuple:
    cfg, weights, vocab = load_model(args.model)
    dataset = load_manifest(args.manifest, limit=args.limit)
    return cfg, weights, vocab, dataset


def _eas_from_args(args, cfg) -> EasConfig | None:
    if args.stage is None and args.sparsity is None:
        return None
    if args.stage is None or args.sparsity is None:
        raise ConfigError("--stage and --sparsity must be given together")
    eas = EasConfig(stage=args.stage, sparsity=args.sparsity,
                    aggregation=args.aggregation, cross_layer=args.cross_layer,
                    rng_seed=args.seed)
    eas.validate(cfg.n_encoder_layers)
    return eas


def cmd_gen_fixtures(args) -> int:
    paths = fixtures.write_fixtures(args.out, args.preset, args.n_examples,
                                    args.seed, args.scheme)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, weights, vocab, dataset = _load(args)
    eas = _eas_from_args(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    baseline = evaluate_config(cfg, weights, dataset, vocab, None,
                               max_new_tokens=args.max_new_tokens)
    if eas is None:
        record = baseline
    else:
        record = evaluate_config(cfg, weights, dataset, vocab, eas, baseline,
                                 max_new_tokens=args.max_new_tokens)
    doc = {
        "schema_version": report.SCHEMA_VERSION,
        "record": record.to_json_dict(),
        "baseline": baseline.to_json_dict(),
    }
    report.write_json(out / "record.json", doc)
    label = "baseline" if eas is None else eas.label()
    print(f"{label}: wer={record.wer:.4f} rtf={record.rtf:.4f} "
          f"ratio={record.accuracy_ratio:.4f} speedup={record.speedup:.3f}x")
    print(f"wrote {out / 'record.json'}")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg, weights, vocab, dataset = _load(args)
    grid = parse_grid(args.grid, cfg.n_encoder_layers) if args.grid else SearchGrid(
        stages=tuple(range(1, cfg.n_encoder_layers + 1)))
    if args.cross_layer:
        bad = [s for s in grid.stages if s != cfg.n_encoder_layers]
        if bad:
            raise ConfigError(
                f"--cross-layer drops at the last layer; grid stages must be "
                f"{{{cfg.n_encoder_layers}}}, got {sorted(set(bad))}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(label, rec):
        print(f"  {label:<24} wer={rec.wer:.4f} rtf={rec.rtf:.4f}", flush=True)

    baseline, records = run_grid(cfg, weights, dataset, vocab, grid,
                                 aggregation=args.aggregation,
                                 cross_layer=args.cross_layer,
                                 rng_seed=args.seed,
                                 max_new_tokens=args.max_new_tokens,
                                 progress=progress)
    pareto = select_constrained(baseline, records)
    meta = {
        "model": str(args.model),
        "manifest": str(args.manifest),
        "grid": {"stages": list(grid.stages), "sparsities": list(grid.sparsities)},
        "aggregation": args.aggregation,
        "cross_layer": args.cross_layer,
        "rng_seed": args.seed,
        "n_examples": len(dataset),
    }
    report.write_json(out / "report.json", report.pareto_report_dict(pareto, meta))
    (out / "report.txt").write_text(report.pareto_table_text(pareto))
    report.write_scatter_csv(out / "scatter.csv", pareto)
    if not args.no_figures:
        report.render_search_figure(out / "front.png", pareto)
    print()
    print(report.pareto_table_text(pareto))
    print(f"wrote {out / 'report.json'}, report.txt, scatter.csv"
          + ("" if args.no_figures else ", front.png"))
    if args.require_admissible and pareto.no_admissible:
        print("no admissible configuration", file=sys.stderr)
        return EXIT_NO_ADMISSIBLE
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg, weights, vocab, dataset = _load(args)
    grid = parse_grid(args.grid, cfg.n_encoder_layers) if args.grid else SearchGrid(
        stages=(args.stage,))
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    sweep = []
    for s in sorted(grid.sparsities):
        eas = None if s == 0.0 else EasConfig(stage=args.stage, sparsity=s,
                                              aggregation=args.aggregation,
                                              rng_seed=args.seed)
        if eas is not None:
            eas.validate(cfg.n_encoder_layers)
        timing, tokens, cap_hits = timed_dataset_pass(
            dataset, cfg, weights, vocab, eas, args.repeats, args.max_new_tokens)
        label = "baseline" if eas is None else eas.label()
        rows.extend(report.timing_rows(label, timing, tokens, cap_hits > 0))
        sweep.append((s, timing))
        print(f"  {label:<24} encoder median {timing.encoder_seconds:.4f}s "
              f"(tokens {tokens}, cap hits {cap_hits})", flush=True)
    report.write_timing_csv(out / "timing.csv", rows)

    baseline_avg, points = token_growth_curve(
        dataset, cfg, weights, vocab, args.stage, list(grid.sparsities),
        aggregation=args.aggregation, rng_seed=args.seed,
        max_new_tokens=args.max_new_tokens)
    report.write_token_growth_csv(out / "token_growth.csv", baseline_avg, points)
    if not args.no_figures:
        report.render_timing_figure(out / "timing.png", sweep)
        report.render_token_growth_figure(out / "token_growth.png",
                                          baseline_avg, points)
    print(f"wrote {out / 'timing.csv'}, token_growth.csv"
          + ("" if args.no_figures else ", timing.png, token_growth.png"))
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg, weights, vocab, dataset = _load(args)
    eas = _eas_from_args(args, cfg)
    if eas is None:
        raise ConfigError("stability needs --stage and --sparsity")
    try:
        sizes = [int(tok) for tok in args.group_sizes.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse --group-sizes {args.group_sizes!r}") from None
    if not sizes:
        raise ConfigError("--group-sizes is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base_stats = collect_correctness(cfg, weights, dataset, vocab, None,
                                     args.max_new_tokens)
    eas_stats = collect_correctness(cfg, weights, dataset, vocab, eas,
                                    args.max_new_tokens)
    analysis = stability_analysis(list(zip(base_stats, eas_stats)), sizes,
                                  shuffle_seed=args.shuffle_seed)
    report.write_stability_csv(out / "stability.csv", analysis)
    if not args.no_figures:
        report.render_stability_figure(out / "stability.png", analysis)
    for p in analysis.points:
        print(f"  size {p.group_size:>5}: {p.n_groups:>4} groups, "
              f"ratio {p.mean:.4f} +/- {p.std:.4f}")
    stable = analysis.smallest_stable_size()
    if stable is not None:
        print(f"smallest group size with std <= 0.01: {stable}")
    print(f"wrote {out / 'stability.csv'}"
          + ("" if args.no_figures else ", stability.png"))
    return EXIT_OK


_COMMANDS = {
    "gen-fixtures": cmd_gen_fixtures,
    "run": cmd_run,
    "search": cmd_search,
    "profile": cmd_profile,
    "stability": cmd_stability,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
