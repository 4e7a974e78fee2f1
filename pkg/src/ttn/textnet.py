"""Train a small CNN to regress each image's text topic distribution.

Pairs are (image, topic distribution of the paired document); the net is
trained from scratch with sigmoid cross-entropy on those soft targets, so
whatever the text side considers topically similar becomes the supervisory
signal for the image side. No labels are involved anywhere.

Determinism: batch composition depends only on (seed, iteration), per-sample
augmentation only on (augment seed, global sample index). A checkpoint stores
the momentum buffers, so resuming from iteration i replays exactly the
trajectory a single longer run would have taken.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .errors import (
    CorruptFile,
    CropTooLarge,
    NoPairs,
    NonFiniteLoss,
    ShapeMismatch,
)
from .fileio import (
    MAGIC_NET,
    atomic_write,
    decode_image,
    expect_eof,
    read_array,
    read_header,
    ttn_threads,
    write_array,
    write_header,
)

log = logging.getLogger(__name__)


@dataclass
class TrainingPair:
    """One training example: a stored image and its soft topic target."""

    image: np.ndarray  # (3, H, W) in [0, 1]
    target: np.ndarray  # (k,) on the simplex
    doc_id: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ShapeMismatch(f"image must be (3, H, W), got {self.image.shape}")
        if abs(float(self.target.sum()) - 1.0) > 1e-6:
            raise ValueError(f"target for {self.doc_id!r} does not sum to 1")


@dataclass(frozen=True)
class AugmentConfig:
    """Random-crop-and-mirror policy applied per sample during training."""

    crop_size: int
    mirror_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.crop_size < 1:
            raise ValueError(f"crop_size must be >= 1, got {self.crop_size}")
        if not 0.0 <= self.mirror_prob <= 1.0:
            raise ValueError(f"mirror_prob must be in [0, 1], got {self.mirror_prob}")


@dataclass
class Checkpoint:
    spec: nn.NetSpec
    params: list
    iteration: int
    sgd: nn.SgdConfig
    seed: int = 0
    lda_model_hash: str = ""


def make_pairs(docs, model, image_root, infer_missing=False, infer_seed=0):
    """Pair every decodable image of every document with that doc's theta.

    Documents are visited in doc_id order. A document owning several images
    yields several pairs with identical targets. Unreadable images, and docs
    without a stored theta (unless infer_missing covers them), are skipped
    with a warning; if nothing survives, NoPairs is raised.
    """
    from . import lda as lda_mod
    from . import corpus as corpus_mod

    jobs = []
    for doc in sorted(docs, key=lambda d: d.doc_id):
        theta = model.doc_thetas.get(doc.doc_id)
        if theta is None:
            if infer_missing:
                counts = corpus_mod.text_to_counts(doc.text, model.word_index)
                if not counts:
                    log.warning("doc %s: no in-vocabulary token, skipped", doc.doc_id)
                    continue
                bow = corpus_mod.BowDocument(doc_id=doc.doc_id, counts=counts)
                theta = lda_mod.infer(bow, model, seed=infer_seed)
            else:
                log.warning("doc %s: no stored theta, skipped", doc.doc_id)
                continue
        for rel_path in doc.image_paths:
            jobs.append((doc.doc_id, theta, os.path.join(image_root, rel_path)))

    def decode(job):
        doc_id, theta, path = job
        try:
            return TrainingPair(image=decode_image(path), target=np.asarray(theta, dtype=np.float64), doc_id=doc_id)
        except Exception as exc:  # noqa: BLE001 - any per-image failure is just a skip
            log.warning("skipping image %s: %s", path, exc)
            return None

    workers = ttn_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            decoded = list(pool.map(decode, jobs))  # map preserves order
    else:
        decoded = [decode(j) for j in jobs]

    pairs = [p for p in decoded if p is not None]
    if not pairs:
        raise NoPairs("no (image, theta) pair could be built")
    return pairs


def augment(image, cfg, sample_index):
    """Deterministic random crop plus optional horizontal mirror.

    All randomness comes from (cfg.seed, sample_index), so the same sample
    index always produces the same view. Draw order is fixed: top offset,
    left offset, mirror coin.
    """
    c, h, w = image.shape
    if cfg.crop_size > min(h, w):
        raise CropTooLarge(f"crop {cfg.crop_size} exceeds image {h}x{w}")
    rng = np.random.default_rng((cfg.seed, sample_index))
    top = int(rng.integers(0, h - cfg.crop_size + 1))
    left = int(rng.integers(0, w - cfg.crop_size + 1))
    view = image[:, top : top + cfg.crop_size, left : left + cfg.crop_size]
    if rng.random() < cfg.mirror_prob:
        view = view[:, :, ::-1]
    return np.ascontiguousarray(view)


def _epoch_permutation(seed, epoch, n):
    return np.random.default_rng((seed, 1, epoch)).permutation(n)


def _pair_index(seed, n, position, perm_cache):
    epoch, offset = divmod(position, n)
    if epoch not in perm_cache:
        perm_cache.clear()
        perm_cache[epoch] = _epoch_permutation(seed, epoch, n)
    return int(perm_cache[epoch][offset])


def _check_geometry(spec, pairs, aug_cfg):
    in_c, in_h, in_w = spec.in_shape
    if in_h != in_w:
        raise ShapeMismatch(f"net input must be square, got {spec.in_shape}")
    if aug_cfg is not None and aug_cfg.crop_size != in_h:
        raise ShapeMismatch(f"crop_size {aug_cfg.crop_size} != net input side {in_h}")
    for pair in pairs:
        _, h, w = pair.image.shape
        if aug_cfg is None and (h, w) != (in_h, in_w):
            raise ShapeMismatch(
                f"doc {pair.doc_id!r}: image {h}x{w} needs an AugmentConfig to reach {in_h}x{in_w}"
            )
        if aug_cfg is not None and min(h, w) < aug_cfg.crop_size:
            raise CropTooLarge(f"doc {pair.doc_id!r}: image {h}x{w} smaller than crop")


def _training_run(pairs, spec, params, loss_fn, sgd_cfg, aug_cfg, seed, start_iter, dtype, targets,
                  checkpoint_every=None, checkpoint_dir=None, make_ckpt=None):
    n = len(pairs)
    batch = sgd_cfg.batch_size
    history = []
    perm_cache = {}
    for iteration in range(start_iter, sgd_cfg.max_iters):
        idx = [_pair_index(seed, n, iteration * batch + j, perm_cache) for j in range(batch)]
        if aug_cfg is None:
            views = [pairs[i].image for i in idx]
        else:
            views = [
                augment(pairs[i].image, aug_cfg, iteration * batch + j) for j, i in enumerate(idx)
            ]
        x = np.stack(views).astype(dtype, copy=False)
        t = targets[idx]
        logits, cache = nn.forward(spec, params, x)
        loss, grad_logits = loss_fn(logits.astype(np.float64, copy=False), t)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became non-finite at iteration {iteration}")
        grads = nn.backward(spec, params, cache, grad_logits.astype(dtype, copy=False))
        nn.sgd_step(params, grads, sgd_cfg, iteration)
        history.append((iteration, nn.learning_rate(sgd_cfg, iteration), loss))
        done = iteration + 1
        if checkpoint_every and checkpoint_dir and (done % checkpoint_every == 0) and done < sgd_cfg.max_iters:
            save_checkpoint(make_ckpt(done), os.path.join(checkpoint_dir, f"ckpt_{done:06d}.ckpt"))
    return history


def train(pairs, spec, sgd_cfg, aug_cfg, seed, *, start=None, dtype=np.float64,
          checkpoint_every=None, checkpoint_dir=None, lda_model_hash=""):
    """Train from scratch (or resume from `start`) on topic-regression pairs.

    Returns (final checkpoint, history) where history rows are
    (iteration, learning rate, loss). With max_iters == 0 the returned
    parameters equal the seeded initialization bit for bit.
    """
    if not pairs:
        raise NoPairs("pairs must be nonempty")
    _check_geometry(spec, pairs, aug_cfg)
    k = spec.out_dim
    for pair in pairs:
        if pair.target.shape != (k,):
            raise ShapeMismatch(f"doc {pair.doc_id!r}: target dim {pair.target.shape} != net out {k}")

    if start is not None:
        if start.spec != spec:
            raise ShapeMismatch("resume checkpoint was trained with a different spec")
        params = [
            None if p is None else nn.LayerParams(
                p.weight.astype(dtype), p.bias.astype(dtype),
                p.weight_momentum.astype(dtype), p.bias_momentum.astype(dtype),
            )
            for p in start.params
        ]
        start_iter = start.iteration
    else:
        params = nn.init_params(spec, seed, dtype)
        start_iter = 0

    targets = np.stack([p.target for p in pairs]).astype(np.float64)

    def make_ckpt(iteration):
        return Checkpoint(
            spec=spec,
            params=nn.copy_params(params),
            iteration=iteration,
            sgd=sgd_cfg,
            seed=seed,
            lda_model_hash=lda_model_hash,
        )

    history = _training_run(
        pairs, spec, params, nn.sigmoid_cross_entropy, sgd_cfg, aug_cfg, seed, start_iter,
        dtype, targets, checkpoint_every, checkpoint_dir, make_ckpt,
    )
    return make_ckpt(sgd_cfg.max_iters), history


_DETERMINISTIC_VIEWS = ("center", "tl", "tr", "bl", "br")


def _crop_at(image, top, left, size):
    return image[:, top : top + size, left : left + size]


def predict_topics(checkpoint, image, n_crops=10, random_crops=False, seed=0):
    """Topic distribution for one image: sigmoid logits averaged over crops.

    The default views are deterministic: center and the four corners, then
    the same five mirrored, in that order; n_crops takes a prefix of the ten.
    random_crops switches to seeded random views instead, in which case
    n_crops may exceed ten. The averaged activations are renormalized to
    sum to one.
    """
    if n_crops < 1:
        raise ValueError(f"n_crops must be >= 1, got {n_crops}")
    spec = checkpoint.spec
    size = spec.in_shape[1]
    c, h, w = image.shape
    if min(h, w) < size:
        raise CropTooLarge(f"image {h}x{w} smaller than net input {size}")

    views = []
    if random_crops:
        cfg = AugmentConfig(crop_size=size, mirror_prob=0.5, seed=seed)
        views = [augment(image, cfg, i) for i in range(n_crops)]
    else:
        n_crops = min(n_crops, 10)
        positions = {
            "center": ((h - size) // 2, (w - size) // 2),
            "tl": (0, 0),
            "tr": (0, w - size),
            "bl": (h - size, 0),
            "br": (h - size, w - size),
        }
        for mirrored in (False, True):
            for name in _DETERMINISTIC_VIEWS:
                top, left = positions[name]
                view = _crop_at(image, top, left, size)
                if mirrored:
                    view = view[:, :, ::-1]
                views.append(view)
        views = views[:n_crops]

    x = np.ascontiguousarray(np.stack(views), dtype=np.float64)
    logits, _ = nn.forward(spec, checkpoint.params, x)
    mean_act = nn.sigmoid(logits).mean(axis=0)
    return mean_act / mean_act.sum()


def extract_features(checkpoint, image, layer_name):
    """Flattened activation of a named layer for the center crop of an image."""
    spec = checkpoint.spec
    index = spec.resolve_layer(layer_name)
    size = spec.in_shape[1]
    c, h, w = image.shape
    if min(h, w) < size:
        raise CropTooLarge(f"image {h}x{w} smaller than net input {size}")
    view = _crop_at(image, (h - size) // 2, (w - size) // 2, size)
    x = np.ascontiguousarray(view[None], dtype=np.float64)
    _, cache = nn.forward(spec, checkpoint.params, x)
    return nn.layer_outputs(cache)[index].reshape(-1).copy()


def fine_tune(checkpoint, labeled_pairs, n_classes, sgd_cfg, seed, aug_cfg=None, dtype=np.float64):
    """Swap the final dense layer for a fresh n_classes head and train with
    softmax cross-entropy. Trunk weights start from the checkpoint (with
    momentum reset); the head is re-initialized from `seed`.

    labeled_pairs reuse TrainingPair with one-hot class targets. Returns
    (checkpoint, history).
    """
    if not labeled_pairs:
        raise NoPairs("labeled_pairs must be nonempty")
    spec = checkpoint.spec
    if not isinstance(spec.layers[-1], nn.Dense):
        raise ShapeMismatch("fine-tuning expects a net ending in a dense layer")
    new_spec = nn.NetSpec(
        in_shape=spec.in_shape,
        layers=spec.layers[:-1] + (nn.Dense(n_classes, name=spec.layers[-1].name),),
        aliases=dict(spec.aliases),
    )
    _check_geometry(new_spec, labeled_pairs, aug_cfg)
    for pair in labeled_pairs:
        if pair.target.shape != (n_classes,):
            raise ShapeMismatch(f"label vector {pair.target.shape} != ({n_classes},)")

    params = nn.init_params(new_spec, seed, dtype)
    for i, p in enumerate(checkpoint.params[:-1]):
        if p is not None:
            params[i] = nn.LayerParams(
                p.weight.astype(dtype).copy(),
                p.bias.astype(dtype).copy(),
                np.zeros_like(p.weight, dtype=dtype),
                np.zeros_like(p.bias, dtype=dtype),
            )

    targets = np.stack([p.target for p in labeled_pairs]).astype(np.float64)

    def make_ckpt(iteration):
        return Checkpoint(
            spec=new_spec,
            params=nn.copy_params(params),
            iteration=iteration,
            sgd=sgd_cfg,
            seed=seed,
            lda_model_hash=checkpoint.lda_model_hash,
        )

    history = _training_run(
        labeled_pairs, new_spec, params, nn.softmax_cross_entropy, sgd_cfg, aug_cfg, seed, 0,
        dtype, targets,
    )
    return make_ckpt(sgd_cfg.max_iters), history


def save_checkpoint(checkpoint, path):
    """Magic + JSON header + per-layer weight/bias/momentum tensors."""
    header = {
        "spec": checkpoint.spec.to_dict(),
        "iteration": checkpoint.iteration,
        "sgd": asdict(checkpoint.sgd),
        "seed": checkpoint.seed,
        "lda_model_hash": checkpoint.lda_model_hash,
        "param_layers": [i for i, p in enumerate(checkpoint.params) if p is not None],
    }
    with atomic_write(path) as fh:
        write_header(fh, MAGIC_NET, header)
        for p in checkpoint.params:
            if p is None:
                continue
            for tensor in (p.weight, p.bias, p.weight_momentum, p.bias_momentum):
                write_array(fh, tensor)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header = read_header(fh, MAGIC_NET)
        try:
            spec = nn.NetSpec.from_dict(header["spec"])
            sgd_cfg = nn.SgdConfig(**header["sgd"])
            iteration = int(header["iteration"])
            param_layers = set(header["param_layers"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"{path}: invalid checkpoint header: {exc}")
        shapes = _param_shapes(spec)
        params = []
        for i, layer_shapes in enumerate(shapes):
            if layer_shapes is None or i not in param_layers:
                params.append(None)
                continue
            w_shape, b_shape = layer_shapes
            params.append(
                nn.LayerParams(
                    read_array(fh, w_shape),
                    read_array(fh, b_shape),
                    read_array(fh, w_shape),
                    read_array(fh, b_shape),
                )
            )
        expect_eof(fh)
    return Checkpoint(
        spec=spec,
        params=params,
        iteration=iteration,
        sgd=sgd_cfg,
        seed=int(header.get("seed", 0)),
        lda_model_hash=header.get("lda_model_hash", ""),
    )


def _param_shapes(spec):
    shapes = []
    current = spec.in_shape
    for layer, out_shape in zip(spec.layers, spec.shapes()):
        if isinstance(layer, nn.Conv2d):
            shapes.append(((layer.out_channels, current[0], layer.kernel, layer.kernel), (layer.out_channels,)))
        elif isinstance(layer, nn.Dense):
            shapes.append(((layer.out_dim, current[0]), (layer.out_dim,)))
        else:
            shapes.append(None)
        current = out_shape
    return shapes
