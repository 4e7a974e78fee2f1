"""Cross-modal retrieval in the shared topic space.

Text and images both embed to topic distributions, so one KL-divergence scan
ranks either modality against a query from the other. Divergences use
symmetric additive smoothing, p~ = (p + eps) / (1 + k * eps), to keep zero
coordinates finite without changing the ranking of well-separated entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import corpus as corpus_mod
from . import lda as lda_mod
from . import textnet
from .errors import (
    CorruptFile,
    DimensionMismatch,
    DuplicateId,
    EmptyDocument,
    EmptyModality,
)
from .fileio import atomic_write

MODALITIES = ("text", "image")


def _smooth(p, epsilon):
    p = np.asarray(p, dtype=np.float64)
    return (p + epsilon) / (1.0 + p.size * epsilon)


def kl_divergence(p, q, epsilon=1e-10):
    """D(p~ || q~) with both arguments smoothed identically.

    Zero for identical inputs, positive otherwise (Gibbs' inequality), and
    finite for any pair of nonnegative vectors thanks to the smoothing.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionMismatch(f"distributions differ in shape: {p.shape} vs {q.shape}")
    ps = _smooth(p, epsilon)
    qs = _smooth(q, epsilon)
    # roundoff can land a hair below zero for near-identical inputs
    return max(0.0, float(np.sum(ps * np.log(ps / qs))))


def symmetric_kl(p, q, epsilon=1e-10):
    """Jeffreys form: D(p || q) + D(q || p)."""
    return kl_divergence(p, q, epsilon) + kl_divergence(q, p, epsilon)


@dataclass(frozen=True)
class IndexEntry:
    item_id: str
    modality: str  # "text" or "image"
    embedding: np.ndarray  # (k,) topic distribution
    payload_ref: str = ""

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        object.__setattr__(self, "embedding", np.asarray(self.embedding, dtype=np.float64))


@dataclass(frozen=True)
class RetrievalIndex:
    entries: tuple
    epsilon: float = 1e-10


def build_index(entries, epsilon=1e-10):
    """Validate entries (unique ids, one shared dimension) into an index."""
    entries = tuple(entries)
    if not entries:
        raise ValueError("entries must be nonempty")
    seen = set()
    dim = entries[0].embedding.shape
    for entry in entries:
        if entry.item_id in seen:
            raise DuplicateId(f"duplicate item id {entry.item_id!r}")
        seen.add(entry.item_id)
        if entry.embedding.shape != dim:
            raise DimensionMismatch(
                f"entry {entry.item_id!r} has dim {entry.embedding.shape}, expected {dim}"
            )
    return RetrievalIndex(entries=entries, epsilon=epsilon)


def query(index, query_embedding, target_modality, top_n=10, symmetric=False):
    """Rank entries of target_modality by divergence from the query, ascending.

    Returns [(item_id, divergence)], ties broken by item_id so insertion
    order never leaks into results. top_n is clamped to the available count.
    """
    if target_modality not in MODALITIES:
        raise ValueError(f"target_modality must be one of {MODALITIES}")
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    candidates = [e for e in index.entries if e.modality == target_modality]
    if not candidates:
        raise EmptyModality(f"index holds no {target_modality!r} entries")
    divergence = symmetric_kl if symmetric else kl_divergence
    scored = sorted(
        ((divergence(query_embedding, e.embedding, index.epsilon), e.item_id) for e in candidates),
    )
    return [(item_id, d) for d, item_id in scored[:top_n]]


def embed_text(text, vocab, model, seed=0):
    """Topic distribution of a text snippet via LDA fold-in inference.

    vocab may be a Vocabulary, a word -> id mapping, or a word sequence. A
    snippet with no in-vocabulary token raises EmptyDocument.
    """
    if isinstance(vocab, corpus_mod.Vocabulary):
        word_index = vocab.index
    elif isinstance(vocab, dict):
        word_index = vocab
    else:  # a plain word sequence (tuples have an .index METHOD, hence isinstance above)
        word_index = {w: i for i, w in enumerate(vocab)}
    counts = corpus_mod.text_to_counts(text, word_index)
    if not counts:
        raise EmptyDocument(f"query text has no in-vocabulary token: {text!r}")
    bow = corpus_mod.BowDocument(doc_id="query", counts=counts)
    return lda_mod.infer(bow, model, seed=seed)


def embed_image(image, checkpoint, n_crops=10):
    """Topic distribution of an image via the trained net (crop-averaged)."""
    return textnet.predict_topics(checkpoint, image, n_crops=n_crops)


def feature_nn(db_features, query_vector, metric="cosine", top_n=10):
    """Nearest neighbours in an arbitrary feature space (not topic space).

    db_features is a list of (item_id, vector). Supported metrics: "cosine"
    (1 - cosine similarity; zero vectors get distance 1) and "euclidean".
    """
    if metric not in ("cosine", "euclidean"):
        raise ValueError(f"metric must be cosine or euclidean, got {metric!r}")
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    if not db_features:
        raise ValueError("db_features must be nonempty")
    q = np.asarray(query_vector, dtype=np.float64)
    scored = []
    for item_id, vec in db_features:
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != q.shape:
            raise DimensionMismatch(f"entry {item_id!r} has dim {v.shape}, query {q.shape}")
        if metric == "euclidean":
            dist = float(np.linalg.norm(v - q))
        else:
            norms = np.linalg.norm(v) * np.linalg.norm(q)
            dist = 1.0 if norms == 0 else 1.0 - float(v @ q) / norms
        scored.append((dist, item_id))
    scored.sort()
    return [(item_id, d) for d, item_id in scored[:top_n]]


def save_index(index, path):
    """JSON Lines: one {"id", "modality", "embedding", "payload_ref"} per entry."""
    with atomic_write(path, "w") as fh:
        fh.write(json.dumps({"epsilon": index.epsilon}, sort_keys=True) + "\n")
        for entry in index.entries:
            fh.write(
                json.dumps(
                    {
                        "id": entry.item_id,
                        "modality": entry.modality,
                        "embedding": entry.embedding.tolist(),
                        "payload_ref": entry.payload_ref,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")


def load_index(path):
    entries = []
    epsilon = 1e-10
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptFile(f"{path}:{lineno}: invalid JSON: {exc}")
            if lineno == 1 and "epsilon" in obj and "id" not in obj:
                epsilon = float(obj["epsilon"])
                continue
            try:
                entries.append(
                    IndexEntry(
                        item_id=str(obj["id"]),
                        modality=str(obj["modality"]),
                        embedding=np.asarray(obj["embedding"], dtype=np.float64),
                        payload_ref=str(obj.get("payload_ref", "")),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptFile(f"{path}:{lineno}: invalid entry: {exc}")
    return build_index(entries, epsilon=epsilon)


def format_results(results):
    """Query results as TSV: rank, item id, divergence."""
    lines = ["rank\tid\tdivergence"]
    for rank, (item_id, divergence) in enumerate(results, start=1):
        lines.append(f"{rank}\t{item_id}\t{divergence:.12g}")
    return "\n".join(lines) + "\n"
