import math

import numpy as np
import pytest

sensia = pytest.importorskip("sensia")


def test_info_nce_identical_one_hot_rows():
    u = np.zeros((4, 3))
    u[:, 1] = 1.0
    assert sensia.info_nce(u, u, 0.05) == pytest.approx(math.log(4), abs=1e-9)


def test_schedule_boundaries():
    assert sensia.weights_at_progress(0.0) == ("alignment", (0.54, 0.44, 0.02))
    phase, weights = sensia.weights_at_progress(0.5)
    assert phase == "polish"
    assert weights == (0.15, 0.15, 0.70)


def test_override_mixture():
    assert sensia.override_mixture([0.5, 0.3, 0.2], "top2") == pytest.approx([0.625, 0.375, 0.0])
    assert sensia.override_mixture([0.7, 0.1, 0.1, 0.1], "uniform") == [0.25] * 4
    with pytest.raises(ValueError):
        sensia.override_mixture([0.5, 0.6], "full")


def test_geometry_helpers():
    assert sensia.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    t = rng.standard_normal((40, 5))
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    e = t @ q
    _, cosine = sensia.procrustes(t, e)
    assert cosine == pytest.approx(1.0, abs=1e-9)
    senses = rng.standard_normal((4, 6))
    assert sensia.topology_rho(senses, senses @ np.linalg.qr(rng.standard_normal((6, 6)))[0]) == pytest.approx(1.0)


def test_filter_counts():
    pairs = [
        ("a b c", "x y z", "web", 0.9),
        ("a b c", "x y z", "web", 0.9),
        ("a", "x y z w", "web", 0.9),
        ("d e", "u v", "web", 0.5),
    ]
    kept, stats = sensia.filter_pairs(pairs)
    assert stats["duplicates"] == 1
    assert stats["ratio_rejected"] == 1
    assert stats["similarity_rejected"] == 1
    assert [p[:2] for p in kept] == [("a b c", "x y z")]


def test_config_round_trip():
    cfg = sensia.Config.desk()
    cfg.set("train.total_steps", "8")
    text = cfg.to_text()
    assert "train.total_steps = 8" in text
    assert sensia.Config.parse(text).to_text() == text
    with pytest.raises(ValueError):
        cfg.set("train.nonsense", "1")


def test_tiny_train_and_checkpoint(tmp_path):
    pairs = sensia.generate_synthetic(7, 40)
    assert pairs == sensia.generate_synthetic(7, 40)
    vocab = sensia.Vocab.from_pairs(pairs)
    assert vocab.decode(vocab.encode(pairs[0][1])) == pairs[0][1]

    cfg = sensia.Config.desk()
    for key, value in [
        ("model.d_model", "8"),
        ("model.n_layers", "1"),
        ("model.n_senses", "3"),
        ("train.batch_size", "4"),
        ("train.total_steps", "6"),
        ("train.eval_every", "3"),
    ]:
        cfg.set(key, value)
    cfg.validate()

    model = sensia.Model(cfg, len(vocab), 11)
    rows = sensia.train(model, pairs[:32], pairs[32:], vocab, cfg)
    assert [r["step"] for r in rows][-1] == 6
    assert all(math.isfinite(r["l_total"]) for r in rows)

    alpha = model.alpha(vocab.encode(pairs[0][1]))
    assert np.allclose(alpha.sum(axis=1), 1.0)

    full = sensia.cross_entropy(model, pairs[32:], vocab, "full")
    assert full == pytest.approx(sensia.evaluate(model, pairs[32:], vocab, cfg)["ce_tgt"])
    assert math.isfinite(sensia.cross_entropy(model, pairs[32:], vocab, "top1"))

    path = str(tmp_path / "model.ckpt")
    model.save(path)
    loaded = sensia.Model.load(path)
    assert loaded.parameter_names() == model.parameter_names()
    assert loaded.senses(5).shape == (3, 8)
