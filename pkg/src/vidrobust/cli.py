"""Operator command line.

Subcommands: ``gen-data`` (synthetic dataset), ``train-victim`` (toy
classifier checkpoint), ``attack`` (one episode or a manifest directory),
``revert`` (reversion-only pass on a stored ledger), ``bench`` (full
benchmark with baseline), ``report`` (summary tables from JSON-lines).

Exit codes: 0 success (an attack that merely exhausts its budget still
exits 0 — the process did its job), 1 operational failure, 2 usage or
configuration error.  Errors go to stderr prefixed ``error:`` or
``config error:``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .attack import attack_video, reverse_distortions
from .benchmark import episode_json, run_attack_suite, run_benchmark
from .config import FIELDS, ConfigFileError, RunConfig
from .distortion import load_ledger, replay, save_ledger
from .errors import (ConfigError, LedgerError, SampleRejectedError,
                     VidRobustError)
from .policy import PolicyBundle
from .synth import class_name, synth_dataset
from .victim import ARCHITECTURES, RemoteVictim, load_victim, train_toy_victim
from .video import (LabeledVideo, canonical_json, ingest_frame_dir, map_metric,
                    read_vten, write_vten)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="run-config file of key=value lines")
    common.add_argument("--seed", type=int, metavar="N",
                        help="master RNG seed (default 0)")
    common.add_argument("--victim", metavar="KIND",
                        help="toy-avg, toy-3d, or remote:URL (default toy-3d)")
    common.add_argument("--victim-path", dest="victim_path", metavar="PATH",
                        help="checkpoint file for builtin victim kinds")
    common.add_argument("--distortion", choices=("gb", "dp", "gn"),
                        help="distortion family (default gn)")
    common.add_argument("--grid", metavar="R1xC1:R2xC2",
                        help="two-level patch grid (default 4x4:2x2)")
    common.add_argument("--query-cap", dest="query_cap", type=int, metavar="N",
                        help="victim-query budget per episode (default 10000)")
    common.add_argument("--ablation", choices=("temporal", "spatial", "combined"),
                        help="agent mode (default combined)")
    common.add_argument("--out", metavar="DIR",
                        help="run directory for artifacts (default run)")

    parser = argparse.ArgumentParser(
        prog="vidrobust",
        description="query-budgeted black-box robustness evaluation for "
                    "video classifiers")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", parents=[common],
                       help="write a synthetic dataset as .vten files plus manifest")
    p.add_argument("--n-train", dest="n_train", type=int, metavar="N")
    p.add_argument("--n-val", dest="n_val", type=int, metavar="N")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-victim", parents=[common],
                       help="train a toy victim on synthetic data and save it")
    p.add_argument("--n-train", dest="n_train", type=int, metavar="N")
    p.add_argument("--n-val", dest="n_val", type=int, metavar="N")
    p.add_argument("--max-epochs", dest="max_epochs", type=int, metavar="N")
    p.set_defaults(func=cmd_train_victim)

    p = sub.add_parser("attack", parents=[common],
                       help="attack one video, a frame directory, or a dataset "
                            "directory with a manifest")
    p.add_argument("input", metavar="INPUT",
                   help=".vten file, directory of frame images, or dataset "
                        "directory containing manifest.json")
    p.add_argument("--label", type=int, metavar="N",
                   help="true class of INPUT; defaults to the victim's own "
                        "prediction (costs one extra query)")
    p.add_argument("--split", choices=("train", "val"), default="val",
                   help="manifest split to attack in directory mode")
    p.add_argument("--policy", metavar="PATH",
                   help="warm-start the agents from a saved policy bundle")
    p.add_argument("--save-policy", dest="save_policy", metavar="PATH",
                   help="save the trained policy bundle when done")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("revert", parents=[common],
                       help="re-run distortion reversion on a stored ledger")
    p.add_argument("input", metavar="CLEAN",
                   help=".vten file holding the clean video")
    p.add_argument("--ledger", required=True, metavar="PATH",
                   help="perturbation ledger to prune")
    p.add_argument("--label", required=True, type=int, metavar="N",
                   help="original (correct) class the replay must avoid")
    p.set_defaults(func=cmd_revert)

    p = sub.add_parser("bench", parents=[common],
                       help="benchmark the attack against a victim with a "
                            "noise-flood baseline")
    p.add_argument("--n-samples", dest="n_samples", type=int, metavar="N")
    p.add_argument("--sample-start", dest="sample_start", type=int, metavar="N")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", parents=[common],
                       help="render a summary table from episode JSON-lines files")
    p.add_argument("inputs", nargs="+", metavar="JSONL",
                   help="episode files written by attack or bench")
    p.set_defaults(func=cmd_report)
    return parser


_OVERRIDE_KEYS = tuple(field.name for field in FIELDS)


def _effective_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {key: getattr(args, key) for key in _OVERRIDE_KEYS
                 if getattr(args, key, None) is not None}
    return cfg.override(**overrides).validate()


def _resolve_victim(cfg: RunConfig):
    kind = cfg.victim
    if kind.startswith("remote:"):
        return RemoteVictim(kind[len("remote:"):])
    if kind in ARCHITECTURES:
        if not cfg.victim_path:
            raise ConfigFileError(
                "victim %r needs victim_path=CHECKPOINT; train one with "
                "the train-victim subcommand" % kind)
        victim = load_victim(cfg.victim_path)
        if victim.arch != kind:
            raise ConfigFileError("checkpoint %s holds a %s victim but the "
                                  "config says %s"
                                  % (cfg.victim_path, victim.arch, kind))
        return victim
    raise ConfigFileError("unknown victim %r (expected toy-avg, toy-3d, or "
                          "remote:URL)" % kind)


# -- subcommands ---------------------------------------------------------


def cmd_gen_data(cfg: RunConfig, args) -> int:
    spec = cfg.synth_spec()
    train, val = synth_dataset(spec, cfg.n_train, cfg.n_val)
    out = Path(cfg.out)
    manifest = {"num_classes": spec.num_classes, "frames": spec.frames,
                "height": spec.height, "width": spec.width,
                "channels": spec.channels, "splits": {}}
    offset = 0
    for split, videos in (("train", train), ("val", val)):
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, sample in enumerate(videos):
            index = offset + i
            name = "%05d.vten" % index
            write_vten(sample.video, split_dir / name)
            entries.append({"file": "%s/%s" % (split, name), "index": index,
                            "label": sample.label,
                            "class": class_name(sample.label)})
        manifest["splits"][split] = entries
        offset += len(videos)
    (out / "manifest.json").write_text(canonical_json(manifest) + "\n")
    cfg.echo(out)
    print("wrote %d train + %d val videos to %s" % (len(train), len(val), out))
    return 0


def cmd_train_victim(cfg: RunConfig, args) -> int:
    arch = cfg.victim
    if arch not in ARCHITECTURES:
        raise ConfigFileError("train-victim needs a builtin victim "
                              "(toy-avg or toy-3d), got %r" % arch)
    spec = cfg.synth_spec()
    train, val = synth_dataset(spec, cfg.n_train, cfg.n_val)
    victim = train_toy_victim(
        train, val, arch=arch, seed=cfg.seed, max_epochs=cfg.max_epochs,
        lr=cfg.victim_lr, batch_size=cfg.batch_size,
        target_accuracy=cfg.target_accuracy, min_accuracy=cfg.min_accuracy,
        label_smoothing=cfg.label_smoothing, verbose=True)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "victim.vtck"
    victim.save(path)
    cfg.echo(out)
    print("saved %s (validation accuracy %.3f)" % (path, victim.val_accuracy))
    return 0


def _attack_samples(path: Path, victim, label_flag, split: str):
    """Resolve INPUT into [(index, LabeledVideo)] episodes."""
    if path.is_file():
        video = read_vten(path)
        label = label_flag if label_flag is not None else victim.label(video)
        return [(0, LabeledVideo(video, label, victim.num_classes))]
    manifest_path = path / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        samples = []
        for entry in manifest["splits"][split]:
            video = read_vten(path / entry["file"])
            samples.append((entry["index"],
                            LabeledVideo(video, entry["label"],
                                         victim.num_classes)))
        if not samples:
            raise ConfigFileError("manifest split %r of %s is empty"
                                  % (split, path))
        return samples
    video = ingest_frame_dir(path)
    label = label_flag if label_flag is not None else victim.label(video)
    return [(0, LabeledVideo(video, label, victim.num_classes))]


def cmd_attack(cfg: RunConfig, args) -> int:
    victim = _resolve_victim(cfg)
    config = cfg.attack_config()
    samples = _attack_samples(Path(args.input), victim, args.label, args.split)
    if args.policy:
        bundle, _ = PolicyBundle.load(args.policy)
        if str(bundle.grid) != str(config.grid):
            raise ConfigFileError("policy bundle grid %s does not match "
                                  "configured grid %s"
                                  % (bundle.grid, config.grid))
    else:
        bundle = PolicyBundle(grid=config.grid, seed=config.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    # Skip clean samples the victim already misclassifies; they cannot
    # be attacked and should not abort a directory run.
    runnable = []
    for index, sample in samples:
        if victim.label(sample.video) == sample.label:
            runnable.append((index, sample))
        else:
            print("skipping sample %d: victim already misclassifies it"
                  % index, file=sys.stderr)
    if not runnable:
        raise SampleRejectedError("no runnable samples: the victim "
                                  "misclassifies every input")

    summary, rows, reports = run_attack_suite(
        runnable, victim, config, bundle=bundle,
        progress=lambda msg: print(msg))
    with open(out / "episodes.jsonl", "w") as fh:
        for row in rows:
            fh.write(episode_json(row) + "\n")
    for (index, sample), report in zip(runnable, reports):
        save_ledger(report.ledger, out / ("ledger-%05d.txt" % index))
        write_vten(replay(sample.video, report.ledger),
                   out / ("adv-%05d.vten" % index))
        (out / ("report-%05d.json" % index)).write_text(
            canonical_json(report.to_dict()) + "\n")
    if args.save_policy:
        bundle.save(args.save_policy)
    cfg.echo(out)
    print("%d/%d successful, results in %s"
          % (summary.successes, summary.n_samples, out))
    return 0


def cmd_revert(cfg: RunConfig, args) -> int:
    victim = _resolve_victim(cfg)
    clean = read_vten(args.input)
    ledger = load_ledger(args.ledger)
    full = replay(clean, ledger)
    if victim.label(full) == args.label:
        raise LedgerError("ledger replay is not misclassified; nothing to revert")
    outcome = reverse_distortions(clean, ledger, victim, args.label,
                                  max_queries=cfg.query_cap)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_ledger(outcome.ledger, out / "ledger.txt")
    write_vten(outcome.video, out / "reverted.vten")
    result = {"records_before": len(ledger.records),
              "records_after": len(outcome.ledger.records),
              "removed": outcome.removed, "queries": outcome.queries,
              "map_before": map_metric(clean, full),
              "map_after": map_metric(clean, outcome.video)}
    (out / "revert.json").write_text(canonical_json(result) + "\n")
    cfg.echo(out)
    print("removed %d of %d records using %d queries (MAP %.4f -> %.4f)"
          % (outcome.removed, len(ledger.records), outcome.queries,
             result["map_before"], result["map_after"]))
    return 0


def cmd_bench(cfg: RunConfig, args) -> int:
    victim = _resolve_victim(cfg)
    config = cfg.attack_config()
    if args.ablation is not None:
        ablations = (cfg.engine_ablation(),)
    else:
        ablations = cfg.ablation_list()
    t0 = time.perf_counter()
    report = run_benchmark(victim, spec=cfg.synth_spec(),
                           n_samples=cfg.n_samples, config=config,
                           ablations=ablations, sample_start=cfg.sample_start,
                           out_dir=cfg.out, progress=lambda msg: print(msg))
    cfg.echo(Path(cfg.out))
    print(canonical_json(report.summary_dict()))
    print("benchmark finished in %.1fs" % (time.perf_counter() - t0),
          file=sys.stderr)
    return 0


def _aggregate(rows: list[dict]) -> dict:
    ok = [r for r in rows if r.get("success")]
    mean = lambda key: float(np.mean([r[key] for r in ok])) if ok else float("nan")
    return {"n": len(rows), "successes": len(ok),
            "SR": len(ok) / len(rows),
            "QN": mean("queries"), "MAP": mean("map_after"),
            "MAP_before": mean("map_before")}


def cmd_report(cfg: RunConfig, args) -> int:
    tables = []
    for raw in args.inputs:
        path = Path(raw)
        rows = [json.loads(line) for line in path.read_text().splitlines()
                if line.strip()]
        if not rows:
            print("error: no reports in %s" % path, file=sys.stderr)
            return 1
        tables.append((path.name, _aggregate(rows)))
    header = "%-32s %5s %5s %6s %8s %8s %8s" % (
        "run", "n", "ok", "SR", "QN", "MAP", "MAP0")
    print(header)
    print("-" * len(header))
    for name, agg in tables:
        print("%-32s %5d %5d %6.2f %8.1f %8.3f %8.3f"
              % (name, agg["n"], agg["successes"], agg["SR"], agg["QN"],
                 agg["MAP"], agg["MAP_before"]))
    return 0


# -- dispatch ------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return 0 if exc.code in (0, None) else 2
    try:
        cfg = _effective_config(args)
        return args.func(cfg, args)
    except (ConfigFileError, ConfigError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except VidRobustError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print("config error: no such file: %s" % exc.filename, file=sys.stderr)
        return 2
    except ValueError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
