"""The iterative attack loop: select, distort, query, learn, revert.

One episode attacks one clean video.  Every iteration the temporal
policy picks focus frames, the spatial policy picks one patch per focus
frame, the configured distortion is applied to those patches, and the
victim is queried once.  Rewards from the confidence movement train both
policies in place, so later iterations (and later videos, when the
caller reuses the bundle) start from everything learned so far.

Query accounting: the initial clean-classification query and one query
per iteration count toward QN and the cap.  Reversion queries are
tallied separately; by default they also draw from the same cap so an
episode can never exceed it in total.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .distortion import (
    DistortionKind,
    GaussianNoise,
    PerturbationLedger,
    PerturbationRecord,
    apply_distortion,
    dumps_ledger,
    loads_ledger,
    replay,
    replay_into,
)
from .errors import ConfigError, LedgerError, SampleRejectedError
from .grid import GridSpec, PatchAddress
from .nn import Adam
from .policy import PolicyBundle
from .ppo import PPOConfig, TrajectoryBatch, ppo_update
from .rewards import spatial_reward, temporal_reward
from .saliency import SaliencyCache
from .video import LabeledVideo, map_metric

ABLATIONS = ("combined", "temporal-only", "spatial-only")
REVERSION_ACCOUNTING = ("within-cap", "separate")

_SEED_BOUND = 2**63


@dataclasses.dataclass(frozen=True)
class AttackConfig:
    max_iterations: int = 10_000
    query_cap: int = 10_000
    grid: GridSpec = GridSpec()
    distortion: DistortionKind = GaussianNoise()
    budget_l: int = 4
    temporal_weights: tuple = (1.0, 1.0, 1.0)
    spatial_weights: tuple = (1.0, 1.0, 1.0)
    ppo: PPOConfig = PPOConfig()
    lr: float = 3e-3
    seed: int = 0
    ablation: str = "combined"
    train: bool = True
    revert: bool = True
    reversion_accounting: str = "within-cap"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.query_cap < 1:
            raise ConfigError("query_cap must be >= 1")
        if self.budget_l < 1:
            raise ConfigError("budget_l must be >= 1")
        if self.ablation not in ABLATIONS:
            raise ConfigError("ablation must be one of %s, got %r"
                              % (ABLATIONS, self.ablation))
        if self.reversion_accounting not in REVERSION_ACCOUNTING:
            raise ConfigError("reversion_accounting must be one of %s, got %r"
                              % (REVERSION_ACCOUNTING, self.reversion_accounting))


@dataclasses.dataclass
class AttackReport:
    """Outcome of one episode; ledger is the final (post-reversion) one."""

    success: bool
    original_label: int
    final_label: int
    iterations: int
    queries: int
    reversion_queries: int
    map_before: float
    map_after: float
    conf_initial: float
    conf_final: float
    records_total: int
    records_removed: int
    ledger: PerturbationLedger

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ledger"] = dumps_ledger(self.ledger)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackReport":
        d = dict(d)
        d["ledger"] = loads_ledger(d["ledger"])
        return cls(**d)


@dataclasses.dataclass
class ReversionOutcome:
    ledger: PerturbationLedger
    video: np.ndarray
    queries: int
    removed: int


def _random_addresses(frames, grid: GridSpec, rng: np.random.Generator):
    return tuple(PatchAddress(f, int(rng.integers(grid.d1)), int(rng.integers(grid.d2)))
                 for f in frames)


def attack_video(clean: LabeledVideo, victim, bundle: PolicyBundle,
                 config: AttackConfig | None = None,
                 temporal_opt: Adam | None = None, spatial_opt: Adam | None = None,
                 rng: np.random.Generator | None = None) -> AttackReport:
    """Attack one clean video, updating the bundle's policies in place.

    Pass the optimizers to carry their state across episodes; fresh ones
    are created when omitted.  Raises SampleRejectedError when the
    victim misclassifies the clean video (such samples do not count
    toward success-rate denominators).
    """
    config = config if config is not None else AttackConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if config.train:
        if temporal_opt is None:
            temporal_opt = Adam(bundle.temporal.params, lr=config.lr)
        if spatial_opt is None:
            spatial_opt = Adam(bundle.spatial.params, lr=config.lr)

    start = victim.query_count
    probs = victim.classify(clean.video)
    if int(np.argmax(probs)) != clean.label:
        raise SampleRejectedError(
            "victim misclassifies the clean video (predicted %d, expected %d)"
            % (int(np.argmax(probs)), clean.label))
    conf = float(probs[clean.label])
    conf_initial = conf

    features = bundle.backbone.extract_features(clean.video)
    if config.ablation != "spatial-only" and config.budget_l >= features.n_frames:
        raise ConfigError("budget_l=%d must be smaller than the video's %d frames"
                          % (config.budget_l, features.n_frames))
    cache = SaliencyCache(clean.video, config.grid)
    x = np.array(clean.video, dtype=np.float32, copy=True)
    ledger = PerturbationLedger(config.grid)
    success = False
    final_label = clean.label
    iterations = 0

    for t in range(1, config.max_iterations + 1):
        if (victim.query_count - start) + 1 > config.query_cap:
            break
        iterations = t

        if config.ablation == "spatial-only":
            temporal_action = None
            frames = tuple(range(features.n_frames))
        else:
            temporal_action = bundle.temporal.select_frames(features, rng)
            frames = temporal_action.selected
        if config.ablation == "temporal-only":
            spatial_action = None
            addresses = _random_addresses(frames, config.grid, rng)
        else:
            spatial_action = bundle.spatial.select_patches(features, frames, rng)
            addresses = spatial_action.addresses

        new_records = []
        for address in addresses:
            record = PerturbationRecord(address, config.distortion,
                                        seed=int(rng.integers(_SEED_BOUND)),
                                        iteration=t, conf_before=conf)
            x = apply_distortion(x, record, config.grid)
            ledger.append(record)
            new_records.append(record)

        probs = victim.classify(x)
        final_label = int(np.argmax(probs))
        conf_after = float(probs[clean.label])
        for record in new_records:
            record.conf_after = conf_after

        if config.train:
            batch = TrajectoryBatch()
            if temporal_action is not None:
                reward = temporal_reward(temporal_action.bits, features, conf,
                                         conf_after, config.budget_l,
                                         config.temporal_weights)
                batch.temporal.append(features, temporal_action.bits,
                                      temporal_action.log_prob,
                                      temporal_action.value, reward.total)
            if spatial_action is not None:
                reward = spatial_reward(spatial_action.addresses, clean.video,
                                        conf, conf_after, config.grid,
                                        config.spatial_weights, cache=cache)
                batch.spatial.append(features, spatial_action.addresses,
                                     spatial_action.log_prob,
                                     spatial_action.value, reward.total)
            ppo_update(batch, bundle, temporal_opt, spatial_opt, config.ppo)

        conf = conf_after
        if final_label != clean.label:
            success = True
            break

    queries = victim.query_count - start
    map_before = map_metric(clean.video, x)
    map_after = map_before
    reversion_queries = 0
    removed = 0
    final_ledger = ledger

    if success and config.revert and len(ledger) > 0:
        if config.reversion_accounting == "within-cap":
            budget = config.query_cap - queries
        else:
            budget = None
        outcome = reverse_distortions(clean.video, ledger, victim, clean.label,
                                      max_queries=budget)
        reversion_queries = outcome.queries
        removed = outcome.removed
        final_ledger = outcome.ledger
        map_after = map_metric(clean.video, outcome.video)

    return AttackReport(
        success=success,
        original_label=clean.label,
        final_label=final_label,
        iterations=iterations,
        queries=queries,
        reversion_queries=reversion_queries,
        map_before=map_before,
        map_after=map_after,
        conf_initial=conf_initial,
        conf_final=conf,
        records_total=len(final_ledger),
        records_removed=removed,
        ledger=final_ledger,
    )


def reverse_distortions(clean, ledger: PerturbationLedger, victim,
                        original_label: int,
                        max_queries: int | None = None) -> ReversionOutcome:
    """Greedily drop records the misclassification does not depend on.

    Records are tried once each, least confidence impact first; a
    removal is kept only if the replay stays misclassified and the mean
    absolute perturbation does not grow.  The caller must ensure the
    full replay is currently misclassified.  When at least one removal
    was kept, a final confirmation query re-verifies the pruned video
    (the last accepted query already proved it, so this guards remote
    victims that might not be deterministic).
    """
    clean = np.asarray(clean)
    n = len(ledger)
    if n == 0:
        return ReversionOutcome(PerturbationLedger(ledger.grid, []),
                                np.array(clean, copy=True), 0, 0)
    order = sorted(range(n),
                   key=lambda i: abs(ledger.records[i].conf_before
                                     - ledger.records[i].conf_after))
    skip: set[int] = set()
    used = 0
    current = replay(clean, ledger)
    current_map = map_metric(clean, current)
    for i in order:
        # keep one query in reserve for the confirmation
        if max_queries is not None and used + 1 > max_queries - 1:
            break
        candidate = skip | {i}
        # removing record i only changes its own rectangle, so patch that
        # region instead of replaying the whole ledger
        video = np.array(current, copy=True)
        replay_into(video, clean, ledger, ledger.records[i].address,
                    skip=tuple(sorted(candidate)))
        probs = victim.classify(video)
        used += 1
        if int(np.argmax(probs)) == original_label:
            continue
        candidate_map = map_metric(clean, video)
        if candidate_map > current_map:
            continue
        skip = candidate
        current = video
        current_map = candidate_map
    if skip:
        probs = victim.classify(current)
        used += 1
        if int(np.argmax(probs)) == original_label:
            raise LedgerError(
                "reversion confirmation failed: pruned replay is classified "
                "correctly (victim not deterministic, or precondition unmet)")
    pruned = PerturbationLedger(
        ledger.grid, [r for j, r in enumerate(ledger.records) if j not in skip])
    return ReversionOutcome(pruned, current, used, len(skip))
