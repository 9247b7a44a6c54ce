import math

import numpy as np
import pytest

import cfcontra


def test_matmul_and_softmax():
    out = cfcontra.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0, 6.0], [7.0, 8.0]]))
    np.testing.assert_array_equal(out, [[19, 22], [43, 50]])
    p = cfcontra.softmax(np.array([math.log(2.0), 0.0]))
    np.testing.assert_allclose(p, [2 / 3, 1 / 3], rtol=1e-14)


def test_loss_values_and_gradients():
    loss, grad = cfcontra.cross_entropy(np.array([[0.5, 0.5]]), [0])
    assert loss == pytest.approx(math.log(2.0))
    np.testing.assert_allclose(grad, [[-2.0, 0.0]])

    loss, _ = cfcontra.entropy_loss(np.array([[0.9, 0.1]]))
    assert loss == pytest.approx(0.4690, abs=1e-3)

    loss, grad = cfcontra.info_nce(np.array([[1.0, 0.0]]), [0], np.eye(2), [True, True], 1.0)
    assert loss == pytest.approx(math.log1p(math.exp(-1.0)), abs=1e-12)
    assert grad.shape == (1, 2)


def test_info_nce_matches_numpy():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(12, 3))
    v = rng.normal(size=(4, 3))
    y = rng.integers(0, 4, size=12)
    logits = f @ v.T / 0.3
    want = np.mean(np.log(np.exp(logits).sum(axis=1)) - logits[np.arange(12), y])
    got, _ = cfcontra.info_nce(f, y.tolist(), v, [True] * 4, 0.3)
    assert got == pytest.approx(want, abs=1e-10)


def test_adain_and_style():
    x = np.array([0.0, 2.0]).reshape(1, 1, 1, 2)
    np.testing.assert_allclose(cfcontra.adain_transfer(x, [5.0], [4.0], eps=1e-14).ravel(), [3.0, 7.0])
    assert cfcontra.channel_stats(x) == ([1.0], [1.0])
    assert cfcontra.style_loss([3.0], [1.0], [1.0], [1.0]) == pytest.approx(2.0)
    assert cfcontra.content_loss(x + 1.0, x) == pytest.approx(1.0)


def test_bank_and_pseudo_labels():
    bank = cfcontra.MemoryBank(2, 2, 0.9)
    bank.set_row("source", 0, [0.0, 0.0])
    bank.set_row("source", 1, [10.0, 0.0])
    assert cfcontra.assign_pseudo_labels(np.array([[1.0, 0.0], [5.0, 0.0]]), bank, 0.05) == [0, -1]
    bank.update("target", np.array([[10.0, 0.0], [0.0, 0.0]]), [1, 0])
    bank.update("target", np.array([[0.0, 0.0], [0.0, 0.0]]), [1, 0])
    np.testing.assert_allclose(bank.centers("target")[0], [9.0, 0.0])
    assert bank.initialized("target") == [True, False]
    centers, counts = cfcontra.class_centers(np.array([[0.0, 0.0], [2.0, 2.0]]), [0, 0], 2)
    np.testing.assert_allclose(centers[0], [1.0, 1.0])
    assert counts == [2, 0]
    assert cfcontra.pseudo_label_accuracy([0, -1, 1], [0, 1, 0]) == (0.5, 2)


def test_metrics_and_heads():
    per_class, miou = cfcontra.segmentation_iou([0, 1, 1, 1], [0, 0, 1, 1], 2)
    assert miou == pytest.approx(7 / 12)
    assert per_class[0] == pytest.approx(0.5)
    assert cfcontra.head_parameter_count("moco", 4, 4, 4) == 40
    errors = cfcontra.gradient_suite(instances=2)
    assert max(errors.values()) < 1e-4


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        cfcontra.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(RuntimeError):
        cfcontra.cross_entropy(np.array([[0.5, 0.5]]), [-1])
    with pytest.raises(ValueError):
        cfcontra.train({"tau": -1.0}, cfcontra.generate_dataset({"height": 4, "width": 4}))


def test_train_evaluate_round_trip(tmp_path):
    spec = {"height": 8, "width": 8, "source_train": 10, "target_train": 10, "target_eval": 3, "seed": 2}
    data = cfcontra.generate_dataset(spec)
    assert data.source_images.shape == (10, 3, 8, 8)
    assert len(data.eval_labels) == 3 * 64

    ckpt, metrics = cfcontra.train({"iterations": 30, "seed": 1}, data)
    assert metrics["ce"].shape == (30,)
    np.testing.assert_allclose(
        metrics["total"], metrics["ce"] + 1e-3 * metrics["entropy"] + 1e-3 * metrics["contra"], atol=1e-12
    )
    _, again = cfcontra.train({"iterations": 30, "seed": 1}, data)
    np.testing.assert_array_equal(metrics["total"], again["total"])

    results = cfcontra.evaluate(ckpt, data)
    assert 0.0 <= results["miou"] <= 1.0
    ckpt.save(str(tmp_path / "ckpt.bin"))
    assert cfcontra.evaluate(cfcontra.load_checkpoint(str(tmp_path / "ckpt.bin")), data) == results

    data.save(str(tmp_path))
    loaded = cfcontra.Dataset.load(str(tmp_path))
    np.testing.assert_array_equal(loaded.eval_images, data.eval_images)
