import base64
import json

import numpy as np
import pytest

from vidrobust.errors import (
    RemoteProtocolError,
    ShapeMismatchError,
    TrainingFailureError,
)
from vidrobust.synth import SynthSpec, synth_dataset
from vidrobust.victim import (
    CallableVictim,
    NetworkVictim,
    _build_params,
    encode_classify_request,
    load_victim,
    softmax_np,
    train_toy_victim,
    validate_probs_response,
)


def _uniform_fn(video):
    return np.full(4, 0.25)


def test_callable_victim_counts_queries(small_video):
    victim = CallableVictim(_uniform_fn, num_classes=4)
    assert victim.query_count == 0
    victim.classify(small_video)
    victim.classify(small_video)
    assert victim.query_count == 2


def test_label_is_argmax_and_counts(small_video):
    victim = CallableVictim(lambda v: np.array([0.1, 0.7, 0.2]), num_classes=3)
    assert victim.label(small_video) == 1
    assert victim.query_count == 1


def test_shape_guard_does_not_count(small_video):
    victim = CallableVictim(_uniform_fn, num_classes=4,
                            input_shape=(8, 16, 16, 1))
    with pytest.raises(ShapeMismatchError):
        victim.classify(small_video)
    assert victim.query_count == 0


def test_invalid_video_does_not_count(small_video):
    victim = CallableVictim(_uniform_fn, num_classes=4)
    with pytest.raises(ValueError):
        victim.classify(small_video + 2.0)
    assert victim.query_count == 0


def test_failed_classify_does_not_count(small_video):
    def boom(video):
        raise RuntimeError("backend down")

    victim = CallableVictim(boom, num_classes=4)
    with pytest.raises(RuntimeError):
        victim.classify(small_video)
    assert victim.query_count == 0


def test_softmax_np_oracle():
    logits = np.array([1.0, 2.0, 3.0])
    e = np.exp(logits - 3.0)
    assert np.allclose(softmax_np(logits), e / e.sum(), atol=1e-15)
    # huge logits must not overflow
    assert np.isfinite(softmax_np(np.array([1000.0, 1001.0]))).all()


@pytest.mark.parametrize("arch", ["toy-avg", "toy-3d"])
def test_untrained_network_victim_outputs_probs(arch, sample_video):
    params = _build_params(arch, 6, seed=0)
    victim = NetworkVictim(arch, params, 6, sample_video.shape)
    probs = victim.classify(sample_video)
    assert probs.shape == (6,)
    assert np.isfinite(probs).all()
    assert abs(probs.sum() - 1.0) <= 1e-12
    assert victim.query_count == 1
    # same input, same output, bit for bit
    assert np.array_equal(probs, victim.classify(sample_video))


def test_rgb_folds_to_luma(sample_video):
    # equal channels fold back to the gray value (luma weights sum to 1)
    params = _build_params("toy-avg", 6, seed=1)
    victim = NetworkVictim("toy-avg", params, 6, None)
    got = victim.classify(np.repeat(sample_video, 3, axis=3))
    want = victim.classify(sample_video)
    assert np.allclose(got, want, atol=1e-9)


def test_build_params_rejects_unknown_arch():
    with pytest.raises(ValueError):
        _build_params("resnet", 6, seed=0)


def test_save_load_round_trip(tmp_path, sample_video):
    params = _build_params("toy-3d", 6, seed=2)
    victim = NetworkVictim("toy-3d", params, 6, sample_video.shape,
                           val_accuracy=0.83)
    path = tmp_path / "victim.vtck"
    victim.save(path)
    loaded = load_victim(path)
    assert loaded.arch == "toy-3d"
    assert loaded.num_classes == 6
    assert loaded.input_shape == sample_video.shape
    assert loaded.val_accuracy == 0.83
    assert all(not t.requires_grad for t in loaded.params.tensors())
    assert np.array_equal(victim.classify(sample_video),
                          loaded.classify(sample_video))


def test_load_victim_rejects_other_checkpoints(tmp_path):
    from vidrobust.checkpoint import save_checkpoint

    path = tmp_path / "other.vtck"
    save_checkpoint(path, {}, {"kind": "policy"})
    with pytest.raises(ValueError):
        load_victim(path)


def test_training_smoke():
    spec = SynthSpec(num_classes=2, frames=4, height=32, width=32)
    train, val = synth_dataset(spec, 24, 8)
    victim = train_toy_victim(train, val, arch="toy-avg", max_epochs=3,
                              min_accuracy=0.0)
    assert isinstance(victim, NetworkVictim)
    assert 0.0 <= victim.val_accuracy <= 1.0
    assert all(not t.requires_grad for t in victim.params.tensors())
    probs = victim.classify(train[0].video)
    assert abs(probs.sum() - 1.0) <= 1e-12


def test_training_rejects_single_class():
    spec = SynthSpec(num_classes=2, frames=4, height=32, width=32)
    train, val = synth_dataset(spec, 8, 2)
    one_class = [s for s in train if s.label == 0]
    with pytest.raises(ValueError):
        train_toy_victim(one_class, val, max_epochs=1, min_accuracy=0.0)


def test_training_rejects_bad_smoothing():
    spec = SynthSpec(num_classes=2, frames=4, height=32, width=32)
    train, val = synth_dataset(spec, 4, 2)
    with pytest.raises(ValueError):
        train_toy_victim(train, val, max_epochs=1, min_accuracy=0.0,
                         label_smoothing=1.0)


def test_training_failure_raises():
    spec = SynthSpec(num_classes=2, frames=4, height=32, width=32)
    train, val = synth_dataset(spec, 4, 2)
    with pytest.raises(TrainingFailureError):
        train_toy_victim(train, val, max_epochs=0, min_accuracy=0.5)


def test_encode_classify_request_golden():
    video = np.arange(8, dtype=np.float32).reshape(2, 2, 2, 1) / 8.0
    body = encode_classify_request(video)
    expected_b64 = base64.b64encode(video.astype("<f4").tobytes()).decode()
    parsed = json.loads(body)
    assert parsed == {"data_b64": expected_b64, "dtype": "f32le",
                      "shape": [2, 2, 2, 1]}
    # canonical form: sorted keys, no whitespace
    assert body == json.dumps(parsed, sort_keys=True,
                              separators=(",", ":")).encode()


def test_validate_probs_response_accepts_good():
    body = {"probs": [0.1, 0.2, 0.7], "label": 2}
    probs = validate_probs_response(body, 3)
    assert np.array_equal(probs, [0.1, 0.2, 0.7])


@pytest.mark.parametrize("body", [
    {"label": 0},
    {"probs": [1.0]},
    {"probs": [0.5, 0.5, 0.5], "label": 0},
    {"probs": [0.5, 0.6], "label": 1},
    {"probs": [float("nan"), 1.0], "label": 1},
    {"probs": [0.4, 0.6], "label": 0},
    [0.4, 0.6],
])
def test_validate_probs_response_rejects(body):
    with pytest.raises(RemoteProtocolError):
        validate_probs_response(body, 2)
