"""Latent Dirichlet Allocation via collapsed Gibbs sampling.

The sampler keeps the usual three count tables and resamples one token
assignment at a time:

    p(z = k | rest) is proportional to
        (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)

Documents are processed in sorted doc_id order and all randomness comes from
one seeded PCG64 generator (numpy's default_rng), so a fixed seed gives a
bit-reproducible model. Point estimates are taken from the final sample;
averaging counts over post-burn-in sweeps is available behind a flag.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CorruptFile, EmptyDocument
from .fileio import (
    MAGIC_LDA,
    atomic_write,
    expect_eof,
    read_array,
    read_header,
    write_array,
    write_header,
)


@dataclass(frozen=True)
class LdaHyperparams:
    """Sampler configuration.

    alpha defaults to 50 / k and beta_prior to 0.01, the usual heuristic
    priors. infer_iters controls fold-in inference for unseen documents.
    """

    k: int = 40
    alpha: float | None = None
    beta_prior: float = 0.01
    n_iters: int = 200
    burn_in: int = 100
    infer_iters: int = 50
    seed: int = 0
    average_after_burn_in: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta_prior <= 0:
            raise ValueError(f"beta_prior must be positive, got {self.beta_prior}")
        if self.n_iters < 0 or self.burn_in < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.average_after_burn_in and self.burn_in >= self.n_iters:
            raise ValueError("averaging requires burn_in < n_iters")
        if self.infer_iters < 1:
            raise ValueError(f"infer_iters must be >= 1, got {self.infer_iters}")

    @property
    def effective_alpha(self):
        return 50.0 / self.k if self.alpha is None else self.alpha


@dataclass
class GibbsState:
    """Token-level sampler state with incrementally maintained count tables.

    n_dk, n_kw and n_k must always be the marginal counts of z; recounted()
    rebuilds them from scratch so tests can verify the bookkeeping after any
    number of sweeps.
    """

    doc_ids: tuple
    doc_tokens: list  # per doc: word id of every token occurrence
    z: list  # per doc: topic assignment of every token occurrence
    n_dk: list  # [doc][topic] counts
    n_kw: list  # [topic][word] counts
    n_k: list  # [topic] counts
    k: int
    vocab_size: int

    def recounted(self):
        n_dk = [[0] * self.k for _ in self.doc_ids]
        n_kw = [[0] * self.vocab_size for _ in range(self.k)]
        n_k = [0] * self.k
        for d, (tokens, zs) in enumerate(zip(self.doc_tokens, self.z)):
            for w, topic in zip(tokens, zs):
                n_dk[d][topic] += 1
                n_kw[topic][w] += 1
                n_k[topic] += 1
        return n_dk, n_kw, n_k

    def counts_consistent(self):
        return self.recounted() == (self.n_dk, self.n_kw, self.n_k)


@dataclass
class LdaModel:
    """A trained topic model: smoothed phi plus per-training-doc thetas."""

    vocab_size: int
    k: int
    phi: np.ndarray  # (k, vocab_size), rows on the simplex
    hyper: LdaHyperparams
    doc_thetas: dict  # doc_id -> (k,) theta
    words: tuple

    @property
    def word_index(self):
        return {w: i for i, w in enumerate(self.words)}

    def word_list_hash(self):
        return hashlib.sha256("\n".join(self.words).encode("utf-8")).hexdigest()

    def content_hash(self):
        """Stable digest of the model's identity (k, words, phi bytes)."""
        h = hashlib.sha256()
        h.update(f"k={self.k};v={self.vocab_size};".encode())
        h.update(self.word_list_hash().encode())
        h.update(np.ascontiguousarray(self.phi, dtype="<f8").tobytes())
        return h.hexdigest()


def _expand_bow(bow):
    """Token stream for a bag of words: word ids ascending, repeated by count.

    The fixed expansion order is part of the determinism contract.
    """
    tokens = []
    for word_id in sorted(bow.counts):
        tokens.extend([word_id] * bow.counts[word_id])
    return tokens


def gibbs_init(corpus, k, vocab_size, rng):
    """Build a GibbsState with uniformly random initial assignments."""
    docs = sorted(corpus, key=lambda b: b.doc_id)
    doc_tokens = []
    for bow in docs:
        tokens = _expand_bow(bow)
        if not tokens:
            raise EmptyDocument(f"doc {bow.doc_id!r} has no in-vocabulary tokens")
        if any(w < 0 or w >= vocab_size for w in tokens):
            raise ValueError(f"doc {bow.doc_id!r} has word ids outside [0, {vocab_size})")
        doc_tokens.append(tokens)

    total = sum(len(t) for t in doc_tokens)
    draws = (rng.random(total) * k).astype(np.int64).tolist()
    state = GibbsState(
        doc_ids=tuple(b.doc_id for b in docs),
        doc_tokens=doc_tokens,
        z=[],
        n_dk=[[0] * k for _ in docs],
        n_kw=[[0] * vocab_size for _ in range(k)],
        n_k=[0] * k,
        k=k,
        vocab_size=vocab_size,
    )
    pos = 0
    for d, tokens in enumerate(doc_tokens):
        zs = draws[pos : pos + len(tokens)]
        pos += len(tokens)
        state.z.append(zs)
        row = state.n_dk[d]
        for w, topic in zip(tokens, zs):
            row[topic] += 1
            state.n_kw[topic][w] += 1
            state.n_k[topic] += 1
    return state


def gibbs_sweep(state, alpha, beta, uniforms):
    """One full sweep: resample every token assignment once, in corpus order.

    uniforms must hold one U[0,1) draw per token; consuming pre-drawn numbers
    keeps the PRNG stream identical regardless of how the inner loop is
    implemented.
    """
    k = state.k
    v_beta = state.vocab_size * beta
    n_kw = state.n_kw
    n_k = state.n_k
    probs = [0.0] * k
    pos = 0
    for d, tokens in enumerate(state.doc_tokens):
        nd = state.n_dk[d]
        zs = state.z[d]
        for i, w in enumerate(tokens):
            old = zs[i]
            nd[old] -= 1
            n_kw[old][w] -= 1
            n_k[old] -= 1
            total = 0.0
            for kk in range(k):
                p = (nd[kk] + alpha) * (n_kw[kk][w] + beta) / (n_k[kk] + v_beta)
                probs[kk] = p
                total += p
            r = uniforms[pos] * total
            pos += 1
            new = k - 1
            acc = 0.0
            for kk in range(k):
                acc += probs[kk]
                if r < acc:
                    new = kk
                    break
            zs[i] = new
            nd[new] += 1
            n_kw[new][w] += 1
            n_k[new] += 1


def _smoothed_rows(counts, prior):
    counts = np.asarray(counts, dtype=np.float64)
    smoothed = counts + prior
    return smoothed / smoothed.sum(axis=1, keepdims=True)


def train(corpus, hyper, words):
    """Run collapsed Gibbs sampling and return the point-estimate model.

    corpus is a list of BowDocument whose word ids index into words, the
    lexicographic word list the bags were built against.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    words = tuple(words)
    vocab_size = len(words)
    if vocab_size == 0:
        raise ValueError("words must be nonempty")
    alpha = hyper.effective_alpha
    beta = hyper.beta_prior

    rng = np.random.default_rng(hyper.seed)
    state = gibbs_init(corpus, hyper.k, vocab_size, rng)
    total_tokens = sum(len(t) for t in state.doc_tokens)

    sum_n_dk = None
    sum_n_kw = None
    samples = 0
    if hyper.average_after_burn_in:
        sum_n_dk = np.zeros((len(state.doc_ids), hyper.k))
        sum_n_kw = np.zeros((hyper.k, vocab_size))

    for sweep in range(hyper.n_iters):
        uniforms = rng.random(total_tokens).tolist()
        gibbs_sweep(state, alpha, beta, uniforms)
        if hyper.average_after_burn_in and sweep >= hyper.burn_in:
            sum_n_dk += np.asarray(state.n_dk, dtype=np.float64)
            sum_n_kw += np.asarray(state.n_kw, dtype=np.float64)
            samples += 1

    if hyper.average_after_burn_in:
        n_dk = sum_n_dk / samples
        n_kw = sum_n_kw / samples
    else:
        n_dk = np.asarray(state.n_dk, dtype=np.float64)
        n_kw = np.asarray(state.n_kw, dtype=np.float64)

    phi = _smoothed_rows(n_kw, beta)
    thetas = _smoothed_rows(n_dk, alpha)
    return LdaModel(
        vocab_size=vocab_size,
        k=hyper.k,
        phi=phi,
        hyper=hyper,
        doc_thetas={doc_id: thetas[d].copy() for d, doc_id in enumerate(state.doc_ids)},
        words=words,
    )


def infer(bow, model, seed=0):
    """Fold-in inference: Gibbs over one document's assignments, phi fixed.

    Returns the document's smoothed topic distribution (sums to 1).
    """
    tokens = _expand_bow(bow)
    if not tokens:
        raise EmptyDocument(f"doc {bow.doc_id!r} has no in-vocabulary tokens")
    k = model.k
    alpha = model.hyper.effective_alpha
    iters = model.hyper.infer_iters

    # Column view of phi per distinct word; plain lists keep the inner loop cheap.
    cols = {w: model.phi[:, w].tolist() for w in set(tokens)}

    rng = np.random.default_rng(seed)
    n = len(tokens)
    zs = (rng.random(n) * k).astype(np.int64).tolist()
    nd = [0] * k
    for topic in zs:
        nd[topic] += 1

    probs = [0.0] * k
    for _ in range(iters):
        uniforms = rng.random(n).tolist()
        for i, w in enumerate(tokens):
            old = zs[i]
            nd[old] -= 1
            col = cols[w]
            total = 0.0
            for kk in range(k):
                p = col[kk] * (nd[kk] + alpha)
                probs[kk] = p
                total += p
            r = uniforms[i] * total
            new = k - 1
            acc = 0.0
            for kk in range(k):
                acc += probs[kk]
                if r < acc:
                    new = kk
                    break
            zs[i] = new
            nd[new] += 1

    theta = (np.asarray(nd, dtype=np.float64) + alpha) / (n + k * alpha)
    return theta


def perplexity(corpus, model, seed=0):
    """Corpus perplexity exp(-mean log p(w|d)) with theta from fold-in inference.

    p(w|d) = sum_k theta_dk * phi_kw. Lower is better; a uniform-phi model
    scores exactly vocab_size.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    total_log = 0.0
    total_tokens = 0
    for bow in sorted(corpus, key=lambda b: b.doc_id):
        theta = infer(bow, model, seed=seed)
        word_ids = np.fromiter(sorted(bow.counts), dtype=np.int64)
        counts = np.asarray([bow.counts[w] for w in sorted(bow.counts)], dtype=np.float64)
        p_w = theta @ model.phi[:, word_ids]
        total_log += float(np.log(p_w) @ counts)
        total_tokens += int(counts.sum())
    return float(np.exp(-total_log / total_tokens))


def top_words(model, topic, n):
    """The n most probable words of a topic, ties broken lexicographically."""
    if not 0 <= topic < model.k:
        raise IndexError(f"topic {topic} outside [0, {model.k})")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    row = model.phi[topic]
    order = sorted(range(model.vocab_size), key=lambda w: (-row[w], model.words[w]))
    return [(model.words[w], float(row[w])) for w in order[:n]]


def save_model(model, path):
    """Serialize a model: magic, JSON header, raw phi, then theta records."""
    doc_ids = sorted(model.doc_thetas)
    header = {
        "k": model.k,
        "vocab_size": model.vocab_size,
        "hyper": asdict(model.hyper),
        "words": list(model.words),
        "word_list_hash": model.word_list_hash(),
        "n_docs": len(doc_ids),
    }
    with atomic_write(path) as fh:
        write_header(fh, MAGIC_LDA, header)
        write_array(fh, model.phi)
        for doc_id in doc_ids:
            raw = doc_id.encode("utf-8")
            fh.write(len(raw).to_bytes(4, "little"))
            fh.write(raw)
            write_array(fh, model.doc_thetas[doc_id])


def load_model(path):
    with open(path, "rb") as fh:
        header = read_header(fh, MAGIC_LDA)
        try:
            k = int(header["k"])
            vocab_size = int(header["vocab_size"])
            words = tuple(header["words"])
            hyper = LdaHyperparams(**header["hyper"])
            n_docs = int(header["n_docs"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"{path}: invalid model header: {exc}")
        if len(words) != vocab_size:
            raise CorruptFile(f"{path}: header word list length != vocab_size")
        phi = read_array(fh, (k, vocab_size))
        doc_thetas = {}
        for _ in range(n_docs):
            raw_len = fh.read(4)
            if len(raw_len) < 4:
                raise CorruptFile(f"{path}: truncated theta records")
            id_len = int.from_bytes(raw_len, "little")
            raw_id = fh.read(id_len)
            if len(raw_id) < id_len:
                raise CorruptFile(f"{path}: truncated doc id")
            doc_thetas[raw_id.decode("utf-8")] = read_array(fh, (k,))
        expect_eof(fh)
    model = LdaModel(
        vocab_size=vocab_size,
        k=k,
        phi=phi,
        hyper=hyper,
        doc_thetas=doc_thetas,
        words=words,
    )
    if header.get("word_list_hash") != model.word_list_hash():
        raise CorruptFile(f"{path}: word list hash mismatch")
    return model
