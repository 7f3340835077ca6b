"""Acceptance gate: one test (and one pass/fail line) per criterion.

A1 reward-oracle equivalence     1,000 randomized inputs, 1e-12, < 10 s
A2 gradient suite                1e-6 dense/conv, 1e-5 LSTM + PPO, 20 seeds, < 1 min
A3 policy-optimization sanity    2-armed bandit > 0.95 in 200 updates, 5/5 seeds, < 30 s
A4 flow suite                    (1,0)-px translation < 0.25 px RMSE, degenerates exact, < 10 s
A5 locality and replay           500 random ledgers, pixel-exact, bit-identical, < 1 min
A6 end-to-end desk benchmark     SR >= 70% @ cap 2,000, MAP < matched baseline, < 30 min
A7 reversion soundness           MAP never grows, reverted stays misclassified, stub strict
A8 ablation direction            combined MAP <= each single-agent MAP at equal cap
A9 budget enforcement            victim counter never exceeds the cap anywhere

The desk benchmark (A6-A9) trains a toy victim and attacks 50 unseen
samples three times (combined + two ablations); expect the module to run
for roughly an hour on one desktop core.
"""

import dataclasses
import math
import time

import conftest
import numpy as np
import pytest

from vidrobust.attack import AttackConfig, attack_video
from vidrobust.benchmark import (baseline_at_budget, full_frame_baseline,
                                 matched_baseline_budget, run_attack_suite,
                                 select_correct_samples)
from vidrobust.distortion import (DeadPixels, GaussianBlur, GaussianNoise,
                                  PerturbationLedger, PerturbationRecord,
                                  apply_distortion, loads_ledger, dumps_ledger,
                                  replay)
from vidrobust.features import FrameFeatures
from vidrobust.grid import GridSpec, PatchAddress, patch_rect
from vidrobust.nn import (Tensor, add_dense_params, add_lstm_params, conv2d,
                          conv3d, dense, lstm_scan, tsum)
from vidrobust.nn.gradcheck import grad_check
from vidrobust.nn.params import ParamSet
from vidrobust.policy import PolicyBundle, SpatialPolicy
from vidrobust.ppo import (AgentTrajectory, PPOConfig, TrajectoryBatch,
                           _agent_loss, gae_advantages, ppo_update)
from vidrobust.rewards import confidence_reward, spatial_reward, temporal_reward
from vidrobust.saliency import (SaliencyCache, edge_groups, lk_flow,
                                objectness_score, to_gray)
from vidrobust.synth import SynthSpec, synth_dataset
from vidrobust.victim import CallableVictim, train_toy_victim
from vidrobust.video import LabeledVideo, map_metric


def _report(criterion: str, detail: str) -> None:
    line = "ACCEPTANCE %s: %s" % (criterion, detail)
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)


# -- A1: reward-oracle equivalence ---------------------------------------


def test_a1_reward_oracle_equivalence():
    tol = 1e-12
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0

    # 400 temporal rewards against a pure-python re-evaluation
    for _ in range(400):
        m = int(rng.integers(3, 10))
        budget = int(rng.integers(1, m))
        bits = np.zeros(m, dtype=int)
        bits[rng.choice(m, int(rng.integers(1, m + 1)), replace=False)] = 1
        emb = rng.standard_normal((m, 5))
        cb, ca = rng.random(), rng.random()
        weights = tuple(rng.random(3) + 0.5)
        got = temporal_reward(bits, emb, cb, ca, budget, weights)
        r1 = math.exp(-abs(sum(int(b) for b in bits) - budget) / m)
        total_dist = 0.0
        for j in range(m):
            best = min(math.sqrt(sum((emb[i, k] - emb[j, k]) ** 2
                                     for k in range(5)))
                       for i in range(m) if bits[i])
            total_dist += best
        r2 = math.exp(-total_dist / m)
        r3 = math.exp(cb - ca)
        total = weights[0] * r1 + weights[1] * r2 + weights[2] * r3
        worst = max(worst, abs(got.r1 - r1), abs(got.r2 - r2),
                    abs(got.r3 - r3), abs(got.total - total))

    # 300 spatial rewards: cached engine path vs direct primitive calls
    grid = GridSpec(4, 4, 2, 2)
    for _ in range(20):
        video = rng.random((4, 24, 24, 1)).astype(np.float32)
        cache = SaliencyCache(video, grid)
        fresh = SaliencyCache(video, grid)  # never reused across calls
        for _ in range(15):
            n_addr = int(rng.integers(1, 4))
            addresses = [PatchAddress(int(rng.integers(4)),
                                      int(rng.integers(grid.d1)),
                                      int(rng.integers(grid.d2)))
                         for _ in range(n_addr)]
            cb, ca = rng.random(), rng.random()
            got = spatial_reward(addresses, video, cb, ca, grid, cache=cache)
            r1 = sum(objectness_score(edge_groups(to_gray(video[a.frame])),
                                      patch_rect(grid, 24, 24, a.l1))
                     for a in addresses)
            r2 = math.exp(sum(fresh.saliency_value(a) for a in addresses))
            r3 = math.exp(cb - ca)
            total = r1 + r2 + r3
            worst = max(worst, abs(got.r1 - r1), abs(got.r2 - r2),
                        abs(got.r3 - r3), abs(got.total - total))

    # 300 confidence rewards
    for _ in range(300):
        cb, ca = rng.random(), rng.random()
        worst = max(worst, abs(confidence_reward(cb, ca) - math.exp(cb - ca)))

    # fixed points
    bits = np.array([1, 1, 0, 0, 0])
    fixed = temporal_reward(bits, rng.standard_normal((5, 4)), 0.5, 0.5, 2)
    assert fixed.r1 == 1.0          # sum(bits) == L
    assert fixed.r3 == 1.0          # unchanged confidence
    all_bits = np.ones(5, dtype=int)
    assert temporal_reward(all_bits, rng.standard_normal((5, 4)),
                           0.3, 0.9, 2).r2 == 1.0  # K = all frames
    assert confidence_reward(0.77, 0.77) == 1.0

    elapsed = time.perf_counter() - t0
    _report("A1 reward-oracle", "worst |diff| %.2e (tol 1e-12), %.1fs (< 10s)"
            % (worst, elapsed))
    assert worst <= tol
    assert elapsed < 10.0


# -- A2: gradient suite --------------------------------------------------


def test_a2_gradient_suite():
    t0 = time.perf_counter()
    dense_tol, lstm_tol = 1e-6, 1e-5
    worst_dense = worst_conv = worst_lstm = worst_ppo = 0.0

    for seed in range(20):
        rng = np.random.default_rng(seed)

        ps = ParamSet(seed)
        add_dense_params(ps, "fc", 6, 5)
        x = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
        worst_dense = max(worst_dense, grad_check(
            lambda: tsum(dense(x, ps["fc.w"], ps["fc.b"]) ** 2),
            [x] + ps.tensors()))

        w2 = Tensor(0.3 * rng.standard_normal((3, 3, 2, 3)), requires_grad=True)
        b2 = Tensor(0.1 * rng.standard_normal(3), requires_grad=True)
        x2 = Tensor(rng.standard_normal((1, 6, 6, 2)), requires_grad=True)
        worst_conv = max(worst_conv, grad_check(
            lambda: tsum(conv2d(x2, w2, b2, stride=2, padding="same") ** 2),
            [x2, w2, b2]))
        w3 = Tensor(0.3 * rng.standard_normal((2, 3, 3, 1, 2)), requires_grad=True)
        x3 = Tensor(rng.standard_normal((3, 6, 6, 1)), requires_grad=True)
        worst_conv = max(worst_conv, grad_check(
            lambda: tsum(conv3d(x3, w3) ** 2), [x3, w3]))

        lp = ParamSet(seed)
        add_lstm_params(lp, "r", 4, 5)
        xs = [Tensor(rng.standard_normal(4)) for _ in range(3)]

        def lstm_loss():
            hs = lstm_scan(xs, lp["r.wx"], lp["r.wh"], lp["r.b"])
            return tsum(sum((h ** 2 for h in hs[1:]), hs[0] ** 2))

        worst_lstm = max(worst_lstm, grad_check(lstm_loss, lp))

        # full PPO loss (surrogate + value + entropy) on a 4-step batch
        grid = GridSpec(2, 2, 2, 1)
        policy = SpatialPolicy(12, grid, hidden=5, seed=seed)
        traj = AgentTrajectory()
        for _ in range(4):
            feats = FrameFeatures(rng.standard_normal((3, 6)),
                                  rng.standard_normal(6))
            addrs = (PatchAddress(int(rng.integers(3)),
                                  int(rng.integers(grid.d1)),
                                  int(rng.integers(grid.d2))),)
            traj.append(feats, addrs, float(rng.normal(-1.5, 0.2)),
                        float(rng.normal(0.0, 0.3)), float(rng.random()))
        cfg = PPOConfig()
        adv, ret = gae_advantages(traj.rewards, traj.values,
                                  cfg.gamma, cfg.lam, dones=traj.dones)
        worst_ppo = max(worst_ppo, grad_check(
            lambda: _agent_loss(traj, policy, adv, ret, cfg)[0],
            policy.params))

    elapsed = time.perf_counter() - t0
    _report("A2 gradients",
            "dense %.1e conv %.1e (tol 1e-6) | lstm %.1e ppo %.1e (tol 1e-5) "
            "| 20 seeds, %.1fs (< 60s)"
            % (worst_dense, worst_conv, worst_lstm, worst_ppo, elapsed))
    assert worst_dense < dense_tol
    assert worst_conv < dense_tol
    assert worst_lstm < lstm_tol
    assert worst_ppo < lstm_tol
    assert elapsed < 60.0


# -- A3: policy-optimization sanity --------------------------------------


def test_a3_two_armed_bandit():
    t0 = time.perf_counter()
    grid = GridSpec(2, 1, 1, 1)  # two coarse patches = two arms
    updates_needed = []
    for seed in range(5):
        bundle = PolicyBundle(grid=grid, seed=seed)
        _, s_opt = bundle.make_optimizers(lr=3e-3)
        rng = np.random.default_rng(seed + 100)
        feat_rng = np.random.default_rng(seed)
        features = FrameFeatures(feat_rng.standard_normal((1, 128)),
                                 feat_rng.standard_normal(128))
        probe = (PatchAddress(0, 1, 0),)
        reached = None
        for update in range(200):
            traj = AgentTrajectory()
            for _ in range(8):
                action = bundle.spatial.select_patches(features, (0,), rng)
                reward = 1.0 if action.addresses[0].l1 == 1 else 0.2
                traj.append(features, action.addresses, action.log_prob,
                            action.value, reward)
            ppo_update(TrajectoryBatch(spatial=traj), bundle, None, s_opt)
            log_p, _, _ = bundle.spatial.evaluate(features, probe)
            if float(np.exp(log_p.data)) > 0.95:
                reached = update + 1
                break
        updates_needed.append(reached)
    elapsed = time.perf_counter() - t0
    _report("A3 bandit", "better-arm p>0.95 after %r updates (limit 200), "
            "5/5 seeds, %.1fs (< 30s)" % (updates_needed, elapsed))
    assert all(u is not None for u in updates_needed)
    assert elapsed < 30.0


# -- A4: flow suite ------------------------------------------------------


def test_a4_flow_suite():
    from scipy import ndimage
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    prev = ndimage.gaussian_filter(rng.random((48, 48)), 2.0)
    nxt = np.roll(prev, 1, axis=1)  # every pixel moves exactly (1, 0)
    flow = lk_flow(prev, nxt)
    inner = flow.valid.copy()
    inner[:3, :] = inner[-3:, :] = inner[:, :3] = inner[:, -3:] = False
    err = np.hypot(flow.flow[:, :, 0][inner] - 1.0, flow.flow[:, :, 1][inner])
    rmse = float(np.sqrt(np.mean(err ** 2)))

    static = lk_flow(prev, prev.copy())
    assert np.array_equal(static.flow, np.zeros((48, 48, 2)))  # exact

    flat = lk_flow(np.full((12, 12), 0.5), np.full((12, 12), 0.6))
    assert not flat.valid.any()
    assert np.array_equal(flat.flow, np.zeros((12, 12, 2)))  # exact

    elapsed = time.perf_counter() - t0
    _report("A4 flow", "translation RMSE %.3f px (< 0.25), degenerates exact, "
            "%.1fs (< 10s)" % (rmse, elapsed))
    assert rmse < 0.25
    assert elapsed < 10.0


# -- A5: locality and replay ---------------------------------------------


def _random_ledger(rng):
    grid = GridSpec.parse(str(rng.choice(["4x4:2x2", "2x2:2x2", "3x3:1x2"])))
    channels = int(rng.choice([1, 3]))
    video = rng.random((3, 16, 16, channels)).astype(np.float32)
    ledger = PerturbationLedger(grid)
    for i in range(int(rng.integers(1, 12))):
        pick = int(rng.integers(3))
        if pick == 0:
            kind = GaussianBlur(int(rng.choice([3, 5])),
                                float(rng.uniform(0.5, 2.0)))
        elif pick == 1:
            kind = DeadPixels(float(rng.random()),
                              float(rng.uniform(0.05, 0.5)))
        else:
            kind = GaussianNoise(float(rng.uniform(1e-4, 0.02)))
        address = PatchAddress(int(rng.integers(3)),
                               int(rng.integers(grid.d1)),
                               int(rng.integers(grid.d2)))
        ledger.append(PerturbationRecord(address, kind,
                                         seed=int(rng.integers(2 ** 31)),
                                         iteration=i,
                                         conf_before=float(rng.random()),
                                         conf_after=float(rng.random())))
    return video, ledger


def test_a5_locality_and_replay():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    for _ in range(500):
        video, ledger = _random_ledger(rng)
        adv = video
        for record in ledger.records:
            adv = apply_distortion(adv, record, ledger.grid)
        # perturbed support confined to the addressed rectangles, pixel-exactly
        outside = np.ones(video.shape, dtype=bool)
        for frame, top, left, h, w in ledger.rectangles(video.shape):
            outside[frame, top:top + h, left:left + w, :] = False
        assert np.array_equal(adv[outside], video[outside])
        # replay of the (serialized) ledger reproduces adv bit-identically
        assert np.array_equal(replay(video, ledger), adv)
        assert np.array_equal(
            replay(video, loads_ledger(dumps_ledger(ledger))), adv)
    elapsed = time.perf_counter() - t0
    _report("A5 locality+replay", "500 ledgers pixel-exact and bit-identical, "
            "%.1fs (< 60s)" % elapsed)
    assert elapsed < 60.0


# -- A6-A9: desk benchmark -----------------------------------------------

DESK_SAMPLES = 50
DESK_START = 950          # beyond the 800 train + 150 val stream indices
DESK_CAP = 2000
DESK_VARIANCE = 0.005


@pytest.fixture(scope="module")
def desk_core():
    t0 = time.perf_counter()
    spec = SynthSpec()
    train, val = synth_dataset(spec, 800, 150)
    victim = train_toy_victim(train, val, arch="toy-3d", seed=0,
                              max_epochs=100, target_accuracy=0.925,
                              min_accuracy=0.90)
    samples = select_correct_samples(victim, spec, DESK_SAMPLES,
                                     start=DESK_START)
    config = AttackConfig(max_iterations=DESK_CAP - 1, query_cap=DESK_CAP,
                          distortion=GaussianNoise(variance=DESK_VARIANCE),
                          seed=0)
    summary, rows, reports = run_attack_suite(samples, victim, config)
    base_rows = full_frame_baseline(samples, victim, DESK_VARIANCE, DESK_CAP)
    seconds = time.perf_counter() - t0
    return dict(spec=spec, victim=victim, samples=samples, config=config,
                summary=summary, rows=rows, reports=reports,
                baseline=base_rows, seconds=seconds)


@pytest.fixture(scope="module")
def desk_ablations(desk_core):
    runs = {}
    for ablation in ("temporal-only", "spatial-only"):
        config = dataclasses.replace(desk_core["config"], ablation=ablation)
        summary, rows, _ = run_attack_suite(desk_core["samples"],
                                            desk_core["victim"], config)
        runs[ablation] = (summary, rows)
    return runs


def test_a6_desk_benchmark(desk_core):
    victim, summary = desk_core["victim"], desk_core["summary"]
    assert victim.val_accuracy >= 0.90
    assert len(desk_core["samples"]) == DESK_SAMPLES
    budget = matched_baseline_budget(desk_core["baseline"],
                                     summary.success_rate, DESK_CAP)
    base_sr, base_map = baseline_at_budget(desk_core["baseline"], budget)
    _report("A6 desk benchmark",
            "victim acc %.3f (>= 0.90), SR %.2f (>= 0.70), engine MAP %.3f < "
            "baseline MAP %.3f at budget %d (baseline SR %.2f <= engine SR), "
            "%.1f min (< 30)"
            % (victim.val_accuracy, summary.success_rate, summary.mean_map,
               base_map, budget, base_sr, desk_core["seconds"] / 60.0))
    assert summary.success_rate >= 0.70
    assert base_sr <= summary.success_rate + 1e-9
    assert summary.mean_map < base_map  # strictly lower at matched budget
    assert desk_core["seconds"] < 1800.0


def test_a7_reversion_soundness(desk_core):
    victim = desk_core["victim"]
    checked = 0
    for (index, sample), row, report in zip(desk_core["samples"],
                                            desk_core["rows"],
                                            desk_core["reports"]):
        if not report.success:
            continue
        assert report.map_after <= report.map_before
        adv = replay(sample.video, report.ledger)
        assert victim.label(adv) != sample.label
        checked += 1

    # constructed stub scenario: noise on frames 1..3 is provably dead
    # weight, so reversion must strictly shrink the perturbation
    rng = np.random.default_rng(7)
    video = (0.3 + 0.4 * rng.random((4, 16, 16, 1))).astype(np.float32)
    sample = LabeledVideo(video, 0, 3)
    reference = video.copy()

    def fn(x):
        m = map_metric(reference[:1], x[:1])  # only frame 0 counts
        if m > 1.0:
            return np.array([0.15, 0.7, 0.15])
        p0 = 0.9 - 0.4 * min(m, 1.0)
        return np.array([p0, (1 - p0) / 2, (1 - p0) / 2])

    stub = CallableVictim(fn, 3)
    config = AttackConfig(max_iterations=400, query_cap=1200, budget_l=2,
                          distortion=GaussianNoise(variance=0.05), seed=0)
    report = attack_video(sample, stub, PolicyBundle(seed=0), config,
                          rng=np.random.default_rng(0))
    assert report.success
    assert report.records_removed >= 1
    assert report.map_after < report.map_before  # strict reduction

    _report("A7 reversion", "%d/%d successes: MAP_after <= MAP_before and "
            "reverted still misclassified; stub scenario removed %d records "
            "(MAP %.3f -> %.3f)"
            % (checked, checked, report.records_removed,
               report.map_before, report.map_after))
    assert checked == desk_core["summary"].successes


def test_a8_ablation_direction(desk_core, desk_ablations):
    combined = desk_core["summary"].mean_map
    details = ["combined %.3f" % combined]
    for name, (summary, _) in desk_ablations.items():
        # an ablation that never succeeds counts as unboundedly worse
        abl = summary.mean_map if summary.successes else float("inf")
        details.append("%s %.3f (SR %.2f)" % (name, abl, summary.success_rate))
        assert combined <= abl
    _report("A8 ablations", "mean MAP " + ", ".join(details)
            + " at equal cap %d" % DESK_CAP)


def test_a9_budget_enforcement(desk_core, desk_ablations):
    assert AttackConfig().query_cap == 10_000  # documented default
    all_rows = list(desk_core["rows"])
    for _, rows in desk_ablations.values():
        all_rows.extend(rows)
    worst = max(row.victim_queries for row in all_rows)
    assert all(row.victim_queries <= DESK_CAP for row in all_rows)
    assert all(row.flip_step is None or row.flip_step <= DESK_CAP
               for row in desk_core["baseline"])
    _report("A9 budget", "max victim-counter usage %d of cap %d over %d "
            "episodes (default cap 10000 intact)"
            % (worst, DESK_CAP, len(all_rows)))
