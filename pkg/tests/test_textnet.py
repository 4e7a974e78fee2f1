"""Topic-regression training: pairing, augmentation, determinism, resume."""

from __future__ import annotations

import glob
import os

import numpy as np
import pytest

from ttn import corpus as corpus_mod
from ttn import lda as lda_mod
from ttn import nn, textnet
from ttn.errors import CorruptFile, CropTooLarge, NoPairs, ShapeMismatch, UnknownLayer


def _toy_pairs(n=12, k=3, size=36, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        topic = i % k
        image = rng.random((3, size, size)) * 0.2
        image[topic % 3] += 0.6
        target = np.full(k, 0.05 / (k - 1))
        target[topic] = 0.95
        target = target / target.sum()
        pairs.append(textnet.TrainingPair(image=np.clip(image, 0, 1), target=target, doc_id=f"t{i:03d}"))
    return pairs


def _toy_spec(k=3, side=32):
    return nn.NetSpec(
        in_shape=(3, side, side),
        layers=(
            nn.Conv2d(4, 3, pad=1),
            nn.Relu(),
            nn.MaxPool2d(4),
            nn.Flatten(),
            nn.Dense(k),
        ),
    )


FAST_SGD = nn.SgdConfig(base_lr=0.01, lr_decay=0.1, lr_step=10_000, momentum=0.9, batch_size=4, max_iters=30)
AUG32 = textnet.AugmentConfig(crop_size=32, mirror_prob=0.5, seed=2)


# ----------------------------------------------------------------- make_pairs

@pytest.fixture(scope="module")
def small_model(synth_dataset):
    cfg, manifest = synth_dataset
    docs = corpus_mod.load_corpus(manifest["corpus"])
    vocab = corpus_mod.build_vocabulary(docs, min_df=2, max_df_ratio=0.9)
    bows = [corpus_mod.doc_to_bow(d, vocab) for d in docs]
    hyper = lda_mod.LdaHyperparams(k=2, alpha=0.1, n_iters=60, burn_in=30, seed=0)
    return docs, lda_mod.train(bows, hyper, vocab.words)


def test_make_pairs_counts_and_targets(synth_dataset, small_model):
    cfg, manifest = synth_dataset
    docs, model = small_model
    pairs = textnet.make_pairs(docs, model, manifest["out_dir"])
    assert len(pairs) == sum(len(d.image_paths) for d in docs)
    assert [p.doc_id for p in pairs] == sorted(p.doc_id for p in pairs)
    for pair in pairs:
        assert np.array_equal(pair.target, model.doc_thetas[pair.doc_id])
        assert pair.image.shape == (3, cfg.image_size, cfg.image_size)
        assert pair.image.min() >= 0.0 and pair.image.max() <= 1.0


def test_make_pairs_image_color_tracks_topic(synth_dataset, small_model):
    cfg, manifest = synth_dataset
    docs, model = small_model
    pairs = textnet.make_pairs(docs, model, manifest["out_dir"])
    labels = manifest["doc_labels"]
    # Planted rule: topic t washes color channel t % 3, so that channel is brightest.
    for pair in pairs:
        channel_means = pair.image.mean(axis=(1, 2))
        assert int(np.argmax(channel_means)) == labels[pair.doc_id] % 3


def test_make_pairs_missing_images_skipped(synth_dataset, small_model, tmp_path):
    docs, model = small_model
    with pytest.raises(NoPairs):
        textnet.make_pairs(docs, model, str(tmp_path))  # wrong root: nothing decodable


def test_make_pairs_infer_missing(synth_dataset, small_model):
    cfg, manifest = synth_dataset
    docs, model = small_model
    stripped = lda_mod.LdaModel(
        vocab_size=model.vocab_size,
        k=model.k,
        phi=model.phi,
        hyper=model.hyper,
        doc_thetas={},
        words=model.words,
    )
    with pytest.raises(NoPairs):
        textnet.make_pairs(docs, stripped, manifest["out_dir"], infer_missing=False)
    pairs = textnet.make_pairs(docs, stripped, manifest["out_dir"], infer_missing=True, infer_seed=3)
    assert len(pairs) == sum(len(d.image_paths) for d in docs)
    for pair in pairs:
        assert pair.target.sum() == pytest.approx(1.0)


# -------------------------------------------------------------------- augment

def test_augment_identity_when_crop_fills_image():
    image = np.random.default_rng(0).random((3, 8, 8))
    cfg = textnet.AugmentConfig(crop_size=8, mirror_prob=0.0, seed=1)
    assert np.array_equal(textnet.augment(image, cfg, 0), image)


def test_augment_mirror_is_involution():
    image = np.random.default_rng(1).random((3, 8, 8))
    cfg = textnet.AugmentConfig(crop_size=8, mirror_prob=1.0, seed=1)
    once = textnet.augment(image, cfg, 0)
    assert np.array_equal(once[:, :, ::-1], image)


def test_augment_deterministic_in_sample_index():
    image = np.random.default_rng(2).random((3, 12, 12))
    cfg = textnet.AugmentConfig(crop_size=8, mirror_prob=0.5, seed=9)
    a = textnet.augment(image, cfg, 17)
    b = textnet.augment(image, cfg, 17)
    assert np.array_equal(a, b)
    views = {textnet.augment(image, cfg, i).tobytes() for i in range(40)}
    assert len(views) > 1  # different indices explore different views


def test_augment_output_is_a_window():
    image = np.arange(3 * 10 * 10, dtype=np.float64).reshape(3, 10, 10)
    cfg = textnet.AugmentConfig(crop_size=4, mirror_prob=0.0, seed=0)
    view = textnet.augment(image, cfg, 3)
    assert view.shape == (3, 4, 4)
    # A pure crop preserves row-contiguity of the source values.
    assert view[0, 0, 1] - view[0, 0, 0] == 1.0


def test_augment_rejects_oversized_crop():
    image = np.zeros((3, 6, 6))
    with pytest.raises(CropTooLarge):
        textnet.augment(image, textnet.AugmentConfig(crop_size=7), 0)


# ------------------------------------------------------------------- training

def test_train_zero_iters_returns_init():
    pairs = _toy_pairs()
    spec = _toy_spec()
    cfg = nn.SgdConfig(max_iters=0, batch_size=4)
    checkpoint, history = textnet.train(pairs, spec, cfg, AUG32, seed=3)
    assert history == []
    assert checkpoint.iteration == 0
    assert nn.params_equal(checkpoint.params, nn.init_params(spec, 3))


def test_train_deterministic():
    pairs = _toy_pairs()
    spec = _toy_spec()
    a, ha = textnet.train(pairs, spec, FAST_SGD, AUG32, seed=1)
    b, hb = textnet.train(pairs, spec, FAST_SGD, AUG32, seed=1)
    assert nn.params_equal(a.params, b.params)
    assert ha == hb


def test_train_seed_matters():
    pairs = _toy_pairs()
    spec = _toy_spec()
    a, _ = textnet.train(pairs, spec, FAST_SGD, AUG32, seed=1)
    b, _ = textnet.train(pairs, spec, FAST_SGD, AUG32, seed=2)
    assert not nn.params_equal(a.params, b.params)


def test_train_resume_matches_straight_run():
    pairs = _toy_pairs()
    spec = _toy_spec()
    full_cfg = FAST_SGD
    half_cfg = nn.SgdConfig(base_lr=FAST_SGD.base_lr, lr_decay=FAST_SGD.lr_decay,
                            lr_step=FAST_SGD.lr_step, momentum=FAST_SGD.momentum,
                            batch_size=FAST_SGD.batch_size, max_iters=15)
    straight, h_full = textnet.train(pairs, spec, full_cfg, AUG32, seed=4)
    half, h1 = textnet.train(pairs, spec, half_cfg, AUG32, seed=4)
    resumed, h2 = textnet.train(pairs, spec, full_cfg, AUG32, seed=4, start=half)
    assert nn.params_equal(straight.params, resumed.params)
    assert h_full == h1 + h2
    assert resumed.iteration == full_cfg.max_iters


def test_train_loss_decreases_on_planted_data():
    pairs = _toy_pairs(n=24)
    spec = _toy_spec()
    cfg = nn.SgdConfig(base_lr=0.02, lr_decay=1.0, lr_step=10_000, momentum=0.9, batch_size=8, max_iters=120)
    _, history = textnet.train(pairs, spec, cfg, AUG32, seed=0)
    first = np.mean([h[2] for h in history[:10]])
    last = np.mean([h[2] for h in history[-10:]])
    assert last < 0.6 * first


def test_train_rejects_mismatched_target_dim():
    pairs = _toy_pairs(k=3)
    spec = _toy_spec(k=4)
    with pytest.raises(ShapeMismatch):
        textnet.train(pairs, spec, FAST_SGD, AUG32, seed=0)


def test_train_rejects_crop_spec_mismatch():
    pairs = _toy_pairs()
    spec = _toy_spec(side=32)
    with pytest.raises(ShapeMismatch):
        textnet.train(pairs, spec, FAST_SGD, textnet.AugmentConfig(crop_size=30), seed=0)


def test_train_history_logs_lr_schedule():
    pairs = _toy_pairs()
    spec = _toy_spec()
    cfg = nn.SgdConfig(base_lr=0.01, lr_decay=0.1, lr_step=10, momentum=0.9, batch_size=4, max_iters=20)
    _, history = textnet.train(pairs, spec, cfg, AUG32, seed=0)
    assert [h[0] for h in history] == list(range(20))
    assert all(lr == pytest.approx(0.01) for _, lr, _ in history[:10])
    assert all(lr == pytest.approx(0.001) for _, lr, _ in history[10:])


# ------------------------------------------------------------ checkpoint files

def test_checkpoint_roundtrip(tmp_path):
    pairs = _toy_pairs()
    spec = _toy_spec()
    checkpoint, _ = textnet.train(pairs, spec, FAST_SGD, AUG32, seed=6, lda_model_hash="abc123")
    path = tmp_path / "net.ckpt"
    textnet.save_checkpoint(checkpoint, str(path))
    loaded = textnet.load_checkpoint(str(path))
    assert loaded.spec == checkpoint.spec
    assert loaded.iteration == checkpoint.iteration
    assert loaded.sgd == checkpoint.sgd
    assert loaded.seed == checkpoint.seed
    assert loaded.lda_model_hash == "abc123"
    assert nn.params_equal(loaded.params, checkpoint.params)


def test_checkpoint_truncation_detected(tmp_path):
    checkpoint, _ = textnet.train(_toy_pairs(), _toy_spec(), FAST_SGD, AUG32, seed=0)
    path = tmp_path / "net.ckpt"
    textnet.save_checkpoint(checkpoint, str(path))
    raw = path.read_bytes()
    cut = tmp_path / "cut.ckpt"
    cut.write_bytes(raw[:-24])
    with pytest.raises(CorruptFile):
        textnet.load_checkpoint(str(cut))


def test_intermediate_checkpoints_resume_exactly(tmp_path):
    pairs = _toy_pairs()
    spec = _toy_spec()
    cfg = nn.SgdConfig(base_lr=0.01, lr_decay=1.0, lr_step=100, momentum=0.9, batch_size=4, max_iters=20)
    straight, _ = textnet.train(pairs, spec, cfg, AUG32, seed=8)
    _, _ = textnet.train(
        pairs, spec, cfg, AUG32, seed=8, checkpoint_every=5, checkpoint_dir=str(tmp_path)
    )
    written = sorted(glob.glob(os.path.join(str(tmp_path), "ckpt_*.ckpt")))
    assert [os.path.basename(p) for p in written] == ["ckpt_000005.ckpt", "ckpt_000010.ckpt", "ckpt_000015.ckpt"]
    mid = textnet.load_checkpoint(written[1])
    assert mid.iteration == 10
    resumed, _ = textnet.train(pairs, spec, cfg, AUG32, seed=8, start=mid)
    assert nn.params_equal(resumed.params, straight.params)


# ------------------------------------------------------------------ inference

def _zero_head_checkpoint(k=4, side=8):
    spec = nn.NetSpec(
        in_shape=(3, side, side),
        layers=(nn.Conv2d(2, 3, pad=1), nn.Relu(), nn.Flatten(), nn.Dense(k)),
    )
    params = nn.init_params(spec, seed=0)
    params[-1].weight[:] = 0.0
    params[-1].bias[:] = 0.0
    return textnet.Checkpoint(spec=spec, params=params, iteration=0, sgd=nn.SgdConfig())


def test_predict_topics_uniform_for_zero_head():
    checkpoint = _zero_head_checkpoint(k=4)
    image = np.random.default_rng(0).random((3, 12, 12))
    theta = textnet.predict_topics(checkpoint, image)
    np.testing.assert_allclose(theta, 0.25, rtol=1e-12)


def test_predict_topics_simplex_and_crop_count():
    pairs = _toy_pairs()
    checkpoint, _ = textnet.train(pairs, _toy_spec(), FAST_SGD, AUG32, seed=0)
    image = np.random.default_rng(1).random((3, 36, 36))
    for n_crops in (1, 3, 10, 99):  # 99 clamps to the ten deterministic views
        theta = textnet.predict_topics(checkpoint, image, n_crops=n_crops)
        assert theta.shape == (3,)
        assert theta.sum() == pytest.approx(1.0)
        assert np.all(theta > 0)
    assert np.array_equal(
        textnet.predict_topics(checkpoint, image, n_crops=99),
        textnet.predict_topics(checkpoint, image, n_crops=10),
    )


def test_predict_topics_single_crop_is_center():
    checkpoint, _ = textnet.train(_toy_pairs(), _toy_spec(), FAST_SGD, AUG32, seed=0)
    image = np.random.default_rng(2).random((3, 36, 36))
    theta = textnet.predict_topics(checkpoint, image, n_crops=1)
    center = image[:, 2:34, 2:34]
    logits, _ = nn.forward(checkpoint.spec, checkpoint.params, center[None])
    expected = nn.sigmoid(logits)[0]
    np.testing.assert_allclose(theta, expected / expected.sum(), rtol=1e-12)


def test_predict_topics_random_crops_seeded():
    checkpoint, _ = textnet.train(_toy_pairs(), _toy_spec(), FAST_SGD, AUG32, seed=0)
    image = np.random.default_rng(3).random((3, 40, 40))
    a = textnet.predict_topics(checkpoint, image, n_crops=12, random_crops=True, seed=5)
    b = textnet.predict_topics(checkpoint, image, n_crops=12, random_crops=True, seed=5)
    c = textnet.predict_topics(checkpoint, image, n_crops=12, random_crops=True, seed=6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_predict_topics_rejects_small_image():
    checkpoint = _zero_head_checkpoint(side=8)
    with pytest.raises(CropTooLarge):
        textnet.predict_topics(checkpoint, np.zeros((3, 6, 6)))


def test_extract_features_shapes_and_consistency():
    pairs = _toy_pairs()
    spec = nn.tiny_topic_net(3, in_shape=(3, 32, 32))
    cfg = nn.SgdConfig(base_lr=0.01, batch_size=4, max_iters=10)
    checkpoint, _ = textnet.train(pairs, spec, cfg, AUG32, seed=0)
    image = np.random.default_rng(4).random((3, 32, 32))
    pool = textnet.extract_features(checkpoint, image, "pool5")
    fc = textnet.extract_features(checkpoint, image, "fc7")
    logits_vec = textnet.extract_features(checkpoint, image, "fc2")
    assert pool.shape == (32 * 8 * 8,)
    assert fc.shape == (128,)
    logits, _ = nn.forward(spec, checkpoint.params, image[None])
    np.testing.assert_allclose(logits_vec, logits[0], rtol=1e-12)
    with pytest.raises(UnknownLayer):
        textnet.extract_features(checkpoint, image, "pool9")


# ------------------------------------------------------------------ fine-tune

def _onehot_pairs(n=16, n_classes=2, side=36, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        cls = i % n_classes
        image = rng.random((3, side, side)) * 0.2
        image[cls % 3] += 0.7
        target = np.zeros(n_classes)
        target[cls] = 1.0
        pairs.append(textnet.TrainingPair(image=np.clip(image, 0, 1), target=target, doc_id=f"c{i:03d}"))
    return pairs


def test_fine_tune_zero_iters_keeps_trunk():
    base, _ = textnet.train(_toy_pairs(), _toy_spec(k=3), FAST_SGD, AUG32, seed=1)
    cfg = nn.fine_tune_config(max_iters=0, batch_size=4)
    tuned, history = textnet.fine_tune(base, _onehot_pairs(n_classes=5), 5, cfg, seed=9, aug_cfg=AUG32)
    assert history == []
    assert tuned.spec.out_dim == 5
    for p_old, p_new in zip(base.params[:-1], tuned.params[:-1]):
        if p_old is None:
            continue
        assert np.array_equal(p_old.weight, p_new.weight)
        assert np.array_equal(p_old.bias, p_new.bias)
        assert not p_new.weight_momentum.any()  # momentum reset on transfer
    head = tuned.params[-1]
    assert head.weight.shape == (5, base.params[-1].weight.shape[1])
    fresh = nn.init_params(tuned.spec, 9)
    assert np.array_equal(head.weight, fresh[-1].weight)  # head re-drawn from seed


def test_fine_tune_defaults():
    cfg = nn.fine_tune_config()
    assert cfg.base_lr == pytest.approx(1e-4)
    assert cfg.lr_step == 30_000
    assert cfg.lr_decay == pytest.approx(0.1)
    assert cfg.max_iters == 60_000


def test_fine_tune_learns_two_classes():
    base, _ = textnet.train(_toy_pairs(), _toy_spec(k=3), FAST_SGD, AUG32, seed=1)
    pairs = _onehot_pairs(n=24, n_classes=2)
    cfg = nn.fine_tune_config(base_lr=0.02, max_iters=150, batch_size=8)
    tuned, history = textnet.fine_tune(base, pairs, 2, cfg, seed=2, aug_cfg=AUG32)
    correct = 0
    for pair in pairs:
        center = pair.image[:, 2:34, 2:34]
        logits, _ = nn.forward(tuned.spec, tuned.params, center[None])
        correct += int(np.argmax(logits[0]) == np.argmax(pair.target))
    assert correct / len(pairs) >= 0.95
    assert history[-1][2] < history[0][2]
