"""A toy checkpoint served over the wire behaves exactly like in-process.

These tests compose the server with the attack engine, so they import
vidrobust; the server package itself never does (the wire protocol is the
only coupling, checked below).
"""

import threading
from pathlib import Path

import numpy as np
import pytest

from victim_server import ServedModel, make_server

vidrobust = pytest.importorskip("vidrobust")
from vidrobust.attack import AttackConfig, attack_video
from vidrobust.distortion import GaussianNoise, dumps_ledger
from vidrobust.policy import PolicyBundle
from vidrobust.synth import SynthSpec, synth_dataset
from vidrobust.victim import RemoteVictim, train_toy_victim

SPEC = SynthSpec(num_classes=2, frames=4, height=32, width=32)


@pytest.fixture(scope="module")
def bridge():
    train, val = synth_dataset(SPEC, 24, 8)
    victim = train_toy_victim(train, val, arch="toy-avg", seed=0,
                              max_epochs=3, target_accuracy=0.9,
                              min_accuracy=0.0)
    model = ServedModel(
        model_id="toy-avg-bridge",
        input_shape=victim.input_shape,
        class_names=tuple("class-%d" % c for c in range(victim.num_classes)),
        preprocessing="none (engine sends raw [0, 1] tensors)",
        predict=victim._classify,  # bypass the in-process query counter
    )
    server = make_server(model)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = "http://127.0.0.1:%d" % server.server_port
    yield dict(victim=victim, remote=RemoteVictim(url), val=val)
    server.shutdown()
    thread.join(timeout=5)


def test_metadata_mirrors_the_checkpoint(bridge):
    remote, victim = bridge["remote"], bridge["victim"]
    assert remote.num_classes == victim.num_classes
    assert remote.input_shape == victim.input_shape
    assert remote.model_id == "toy-avg-bridge"


def test_hundred_samples_argmax_identical(bridge):
    remote, victim = bridge["remote"], bridge["victim"]
    samples, _ = synth_dataset(SPEC, 100, 1)
    mismatches = [i for i, s in enumerate(samples)
                  if remote.label(s.video) != victim.label(s.video)]
    assert mismatches == []
    assert remote.query_count == 100


def test_attack_episode_identical_over_the_wire(bridge):
    remote, victim = bridge["remote"], bridge["victim"]
    sample = next(s for s in bridge["val"]
                  if victim.label(s.video) == s.label)
    config = AttackConfig(max_iterations=40, query_cap=120, budget_l=2,
                          distortion=GaussianNoise(variance=0.05), seed=0)
    reports = [
        attack_video(sample, v, PolicyBundle(grid=config.grid, seed=0),
                     config, rng=np.random.default_rng(0))
        for v in (victim, remote)
    ]
    local, wire = reports
    assert (local.success, local.iterations, local.queries) == \
        (wire.success, wire.iterations, wire.queries)
    assert local.final_label == wire.final_label
    assert dumps_ledger(local.ledger) == dumps_ledger(wire.ledger)


def test_engine_has_no_server_dependency():
    root = Path(vidrobust.__file__).parent
    offenders = [py.name for py in root.rglob("*.py")
                 if "victim_server" in py.read_text()]
    assert offenders == []
