"""Command-line interface: campaign lifecycle, benchmark runs, and the service."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bench import (
    VARIANTS,
    load_dataset,
    run,
    summarize,
    synth_dataset,
    write_metrics_csv,
    write_plot_json,
)
from .campaign import Campaign, CampaignConfig, load as load_campaign
from .util import canonical_json


def _state_path(directory: str) -> Path:
    return Path(directory) / "state.json"


def cmd_init(args: argparse.Namespace) -> int:
    config = CampaignConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    path = _state_path(args.dir)
    if path.exists() and not args.force:
        print(f"error: {path} already exists (use --force to overwrite)", file=sys.stderr)
        return 1
    camp = Campaign.init(config, path=path)
    print(f"campaign initialized at {path}")
    print(f"  space cardinality: {camp.space.cardinality}")
    print(f"  tree leaves: {len(camp.tree.leaves())}")
    return 0


def cmd_suggest(args: argparse.Namespace) -> int:
    camp = load_campaign(_state_path(args.dir))
    batch = camp.suggest()
    if not batch:
        print(f"no recommendations: campaign is {camp.status}")
        return 1
    names = camp.space.variable_names
    writer = csv.writer(sys.stdout)
    writer.writerow(names)
    for cond in batch:
        writer.writerow([cond.value(n) for n in names])
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    camp = load_campaign(_state_path(args.dir))
    names = camp.space.variable_names
    results = []
    with open(args.results, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cond = camp.space.condition({n: row[n] for n in names})
            results.append((cond, float(row["value"])))
    summary = camp.ingest(results, external=args.external)
    print(canonical_json(summary))
    return 0


def cmd_status(args: argparse.Namespace) -> int:
    camp = load_campaign(_state_path(args.dir))
    print(json.dumps(camp.status_view(), indent=2, sort_keys=True))
    return 0


def cmd_export_metrics(args: argparse.Namespace) -> int:
    camp = load_campaign(_state_path(args.dir))
    out = {
        "trajectory": camp.trajectory_view(),
        "tree": camp.tree_view(),
        "observations": [
            {"condition": o.condition.as_dict(), "value": o.value, "round": o.round}
            for o in camp.observations
        ],
    }
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"metrics written to {args.out}")
    else:
        print(text)
    return 0


def cmd_bench_run(args: argparse.Namespace) -> int:
    if args.synth:
        dataset = synth_dataset(json.loads(Path(args.synth).read_text(encoding="utf-8")))
    else:
        if not (args.dataset and args.manifest):
            print("error: provide --synth or both --dataset and --manifest", file=sys.stderr)
            return 1
        dataset = load_dataset(args.dataset, args.manifest)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        print(f"error: unknown variants {sorted(unknown)}", file=sys.stderr)
        return 1
    seeds = list(range(args.seeds))
    trajectories = run(variants, dataset, rounds=args.rounds, q=args.batch, seeds=seeds)
    summary = summarize(trajectories, target=args.target)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "trajectories.json").write_text(
        canonical_json([t.to_dict() for t in trajectories]), encoding="utf-8"
    )
    write_metrics_csv(summary, outdir / "metrics.csv")
    write_plot_json(summary, outdir / "plot.json", dataset_name=dataset.name)
    print(f"wrote {outdir}/trajectories.json, metrics.csv, plot.json")
    for variant, entry in sorted(summary["variants"].items()):
        last = entry["rounds"][-1]
        print(f"  {variant}: round {last['round']} best {last['mean']:.2f} +- {last['sd']:.2f}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.storage, token=args.token, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rxnopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a campaign from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("suggest", help="print the next recommended batch as CSV")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("ingest", help="ingest observed results from a CSV file")
    p.add_argument("--dir", required=True)
    p.add_argument("--results", required=True, help="CSV: variable columns + value")
    p.add_argument("--external", action="store_true", help="allow unrecommended conditions")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("status", help="print campaign status")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("export-metrics", help="dump trajectory/tree/observations JSON")
    p.add_argument("--dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_metrics)

    bench = sub.add_parser("bench", help="benchmark harness")
    bsub = bench.add_subparsers(dest="bench_command", required=True)
    p = bsub.add_parser("run", help="run seeded campaigns over a lookup dataset")
    p.add_argument("--dataset", help="complete table CSV")
    p.add_argument("--manifest", help="space manifest JSON")
    p.add_argument("--synth", help="synthetic dataset spec JSON (alternative to --dataset)")
    p.add_argument("--variants", default="full,no_both")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--target", type=float, default=None)
    p.add_argument("--out", default="bench_out")
    p.set_defaults(func=cmd_bench_run)

    p = sub.add_parser("serve", help="start the campaign HTTP service")
    p.add_argument("--storage", default="campaigns")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", default=None)
    p.add_argument("--frontend", default=None, help="directory of built UI assets")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
