"""Robustness benchmark: the attack engine against a noise-flood baseline.

A benchmark run picks correctly-classified synthetic samples, attacks
each one under a per-episode query cap, and summarizes success rate,
query count, and perturbation size.  The reference point is the crudest
black-box attack — add full-frame Gaussian noise until the label flips —
evaluated at the largest query budget whose success rate does not exceed
the engine's, so the perturbation-size comparison is never explained
away by the baseline simply succeeding less often.
"""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from .attack import ABLATIONS, AttackConfig, AttackReport, attack_video
from .distortion import replay, save_ledger
from .policy import PolicyBundle
from .synth import SynthSpec, make_sample
from .video import LabeledVideo, canonical_json, map_metric, write_vten


@dataclasses.dataclass
class EpisodeRow:
    """One attacked sample, as recorded in the episodes JSONL."""

    index: int
    success: bool
    iterations: int
    queries: int
    reversion_queries: int
    victim_queries: int
    map_before: float
    map_after: float
    records_total: int
    records_removed: int
    seconds: float


@dataclasses.dataclass
class RunSummary:
    ablation: str
    n_samples: int
    successes: int
    success_rate: float
    mean_queries: float
    mean_map: float
    max_episode_queries: int
    seconds: float


@dataclasses.dataclass
class BaselineRow:
    """Full-frame noise flood on one sample: step of the flip, if any."""

    index: int
    flip_step: int | None
    map_at_flip: float | None


@dataclasses.dataclass
class BenchmarkReport:
    victim_accuracy: float
    runs: dict[str, RunSummary]
    episodes: dict[str, list[EpisodeRow]]
    baseline: list[BaselineRow]
    baseline_budget: int
    baseline_success_rate: float
    baseline_mean_map: float

    def summary_dict(self) -> dict:
        runs = {}
        for name, s in self.runs.items():
            row = dataclasses.asdict(s)
            # short aliases matching the reported metric names
            row["SR"] = s.success_rate
            row["QN"] = s.mean_queries
            row["MAP"] = s.mean_map
            runs[name] = row
        return {
            "victim_accuracy": self.victim_accuracy,
            "runs": runs,
            "baseline_budget": self.baseline_budget,
            "baseline_success_rate": self.baseline_success_rate,
            "baseline_mean_map": self.baseline_mean_map,
        }


def select_correct_samples(victim, spec: SynthSpec, n: int, start: int = 0,
                           limit: int | None = None) -> list[tuple[int, LabeledVideo]]:
    """First ``n`` stream samples the victim classifies correctly.

    Misclassified samples are skipped, never attacked; scanning past
    ``limit`` candidates (default 20n) raises instead of looping forever.
    """
    limit = 20 * n if limit is None else limit
    chosen: list[tuple[int, LabeledVideo]] = []
    for offset in range(limit):
        sample = make_sample(spec, start + offset)
        if victim.label(sample.video) == sample.label:
            chosen.append((start + offset, sample))
            if len(chosen) == n:
                return chosen
    raise ValueError("only %d of %d requested samples were classified "
                     "correctly within %d candidates" % (len(chosen), n, limit))


def run_attack_suite(samples, victim, config: AttackConfig,
                     bundle: PolicyBundle | None = None,
                     progress=None):
    """Attack every sample in order, reusing one policy bundle throughout.

    Returns (summary, rows, reports).  Per-episode query usage is
    measured on the victim's own counter, not trusted from the report.
    """
    if bundle is None:
        bundle = PolicyBundle(grid=config.grid, seed=config.seed)
    temporal_opt, spatial_opt = bundle.make_optimizers(lr=config.lr)
    rows: list[EpisodeRow] = []
    reports: list[AttackReport] = []
    t_start = time.perf_counter()
    for episode, (index, sample) in enumerate(samples):
        rng = np.random.default_rng([config.seed, episode])
        count_before = victim.query_count
        t0 = time.perf_counter()
        report = attack_video(sample, victim, bundle, config,
                              temporal_opt, spatial_opt, rng=rng)
        row = EpisodeRow(
            index=index,
            success=report.success,
            iterations=report.iterations,
            queries=report.queries,
            reversion_queries=report.reversion_queries,
            victim_queries=victim.query_count - count_before,
            map_before=report.map_before,
            map_after=report.map_after,
            records_total=report.records_total,
            records_removed=report.records_removed,
            seconds=time.perf_counter() - t0,
        )
        rows.append(row)
        reports.append(report)
        if progress is not None:
            progress("%s %3d/%d sample %d %s queries=%d map=%.2f"
                     % (config.ablation, episode + 1, len(samples), index,
                        "hit " if report.success else "miss",
                        row.victim_queries, report.map_after))
    ok = [r for r in rows if r.success]
    summary = RunSummary(
        ablation=config.ablation,
        n_samples=len(rows),
        successes=len(ok),
        success_rate=len(ok) / len(rows) if rows else 0.0,
        mean_queries=float(np.mean([r.queries for r in ok])) if ok else float("nan"),
        mean_map=float(np.mean([r.map_after for r in ok])) if ok else float("nan"),
        max_episode_queries=max((r.victim_queries for r in rows), default=0),
        seconds=time.perf_counter() - t_start,
    )
    return summary, rows, reports


def full_frame_baseline(samples, victim, variance: float, query_cap: int,
                        seed: int = 0) -> list[BaselineRow]:
    """Flood each sample with whole-video noise until the label flips."""
    rows = []
    for episode, (index, sample) in enumerate(samples):
        rng = np.random.default_rng([seed, episode])
        clean = sample.video
        x = np.array(clean, dtype=np.float32, copy=True)
        flip_step = None
        map_at_flip = None
        for step in range(1, query_cap + 1):
            noise = rng.normal(0.0, np.sqrt(variance), size=x.shape)
            x = np.clip(x.astype(np.float64) + noise, 0.0, 1.0).astype(np.float32)
            if victim.label(x) != sample.label:
                flip_step = step
                map_at_flip = map_metric(clean, x)
                break
        rows.append(BaselineRow(index, flip_step, map_at_flip))
    return rows


def matched_baseline_budget(rows, target_success_rate: float,
                            query_cap: int) -> int:
    """Largest budget whose baseline success rate stays <= the target's."""
    flips = sorted(r.flip_step for r in rows if r.flip_step is not None)
    allowed = int(np.floor(target_success_rate * len(rows) + 1e-9))
    if len(flips) <= allowed:
        return query_cap
    return max(flips[allowed] - 1, 0)


def baseline_at_budget(rows, budget: int) -> tuple[float, float]:
    """(success rate, mean flip MAP) of the baseline capped at ``budget``."""
    hits = [r for r in rows if r.flip_step is not None and r.flip_step <= budget]
    rate = len(hits) / len(rows) if rows else 0.0
    mean_map = float(np.mean([r.map_at_flip for r in hits])) if hits else float("nan")
    return rate, mean_map


def run_benchmark(victim, spec: SynthSpec | None = None, n_samples: int = 50,
                  config: AttackConfig | None = None,
                  ablations=("combined",), sample_start: int = 0,
                  out_dir=None, progress=None) -> BenchmarkReport:
    """Full benchmark: per-ablation attack suites plus the noise baseline.

    The baseline is matched to the *combined* run (or the first ablation
    listed) by capping its budget so its success rate cannot exceed the
    engine's.  With ``out_dir`` set, writes summary.json, per-ablation
    episodes JSONL, and the first successful attack's evidence (ledger
    plus adversarial tensor).
    """
    spec = spec if spec is not None else SynthSpec()
    config = config if config is not None else AttackConfig()
    for ablation in ablations:
        if ablation not in ABLATIONS:
            raise ValueError("unknown ablation %r" % (ablation,))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    samples = select_correct_samples(victim, spec, n_samples, start=sample_start)
    runs: dict[str, RunSummary] = {}
    episodes: dict[str, list[EpisodeRow]] = {}
    for ablation in ablations:
        run_config = dataclasses.replace(config, ablation=ablation)
        summary, rows, reports = run_attack_suite(samples, victim, run_config,
                                                  progress=progress)
        runs[ablation] = summary
        episodes[ablation] = rows
        if out is not None:
            _write_episodes(out / ("episodes-%s.jsonl" % ablation), rows)
            _write_evidence(out, ablation, samples, rows, reports)

    baseline_rows = full_frame_baseline(
        samples, victim, _baseline_variance(config), config.query_cap,
        seed=config.seed)
    target = runs[ablations[0]].success_rate
    budget = matched_baseline_budget(baseline_rows, target, config.query_cap)
    baseline_sr, baseline_map = baseline_at_budget(baseline_rows, budget)

    report = BenchmarkReport(
        victim_accuracy=getattr(victim, "val_accuracy", float("nan")),
        runs=runs,
        episodes=episodes,
        baseline=baseline_rows,
        baseline_budget=budget,
        baseline_success_rate=baseline_sr,
        baseline_mean_map=baseline_map,
    )
    if out is not None:
        (out / "summary.json").write_text(canonical_json(report.summary_dict()))
    return report


def _baseline_variance(config: AttackConfig) -> float:
    variance = getattr(config.distortion, "variance", None)
    return variance if variance is not None else 0.005


def episode_json(row: EpisodeRow) -> str:
    """One JSON line per episode; timing is dropped so that reruns of the
    same config produce byte-identical files."""
    record = dataclasses.asdict(row)
    del record["seconds"]
    return json.dumps(record)


def _write_episodes(path: Path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(episode_json(row) + "\n")


def _write_evidence(out: Path, ablation: str, samples, rows, reports) -> None:
    for (index, sample), row, report in zip(samples, rows, reports):
        if not report.success:
            continue
        stem = "evidence-%s-%d" % (ablation, index)
        save_ledger(report.ledger, out / (stem + ".ledger"))
        write_vten(replay(sample.video, report.ledger), out / (stem + ".vten"))
        break
