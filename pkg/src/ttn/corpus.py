"""Corpus handling: tokenization, stemming, vocabulary filtering, bag-of-words.

The text pipeline is deliberately rule-based and deterministic so that two
runs over the same corpus always produce byte-identical vocabularies. Word
ids are positions in the lexicographically sorted retained word list, which
makes them independent of document order.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import CorruptFile, DuplicateId, EmptyVocabulary
from .fileio import atomic_write
from .stopwords import DEFAULT_STOPWORDS

_TOKEN_RE = re.compile(r"[a-z]+")
_VOWELS = frozenset("aeiouy")


def tokenize(text):
    """Split text into lowercase alphabetic tokens.

    The text is lowercased, maximal runs of ASCII letters are extracted
    (digits and punctuation act as separators), and runs shorter than two
    characters are dropped.
    """
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


def stem(token):
    """Strip common English suffixes from a lowercase token.

    This is a small deterministic stand-in for a full stemmer. Rules, in
    order:

    1. plurals: "-sses" -> "-ss"; "-ies" -> "-y" when the token has five or
       more letters; "-xes"/"-ses"/"-zes"/"-ches"/"-shes" drop the "es";
       otherwise a final "-s" is dropped when the token is longer than three
       letters and does not end in "-ss" or "-us";
    2. "-ing" and "-ed" are dropped when the remaining stem is at least three
       letters and contains a vowel;
    3. a doubled trailing consonant exposed by rule 2 is singled, except
       "ll", "ss", and "zz" ("running" -> "runn" -> "run").
    """
    word = token
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies") and len(word) >= 5:
        word = word[:-3] + "y"
    elif word.endswith(("xes", "ses", "zes", "ches", "shes")):
        word = word[:-2]
    elif word.endswith("s") and not word.endswith(("ss", "us")) and len(word) > 3:
        word = word[:-1]

    stripped = False
    for suffix in ("ing", "ed"):
        if word.endswith(suffix):
            rest = word[: -len(suffix)]
            if len(rest) >= 3 and any(c in _VOWELS for c in rest):
                word = rest
                stripped = True
            break
    if stripped and len(word) >= 2 and word[-1] == word[-2] and word[-1] not in "aeioulsz":
        word = word[:-1]
    return word


def normalize(tokens, stopwords=None):
    """Remove stopwords, stem the remainder, preserve order.

    A token whose stem lands on a stopword (or shrinks below two letters) is
    dropped as well, so running the tokenize/normalize pipeline over its own
    output changes nothing.
    """
    if stopwords is None:
        stopwords = DEFAULT_STOPWORDS
    out = []
    for token in tokens:
        if token in stopwords:
            continue
        stemmed = stem(token)
        if len(stemmed) < 2 or stemmed in stopwords:
            continue
        out.append(stemmed)
    return out


@dataclass(frozen=True)
class RawDocument:
    """One corpus entry: an id, its text, and paths of its paired images."""

    doc_id: str
    text: str
    image_paths: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be nonempty")
        object.__setattr__(self, "image_paths", tuple(self.image_paths))
        if any(not p for p in self.image_paths):
            raise ValueError(f"doc {self.doc_id!r} has an empty image path")


@dataclass(frozen=True)
class Vocabulary:
    """Retained words (lexicographically ordered) with their document counts."""

    words: tuple[str, ...]
    doc_freq: tuple[int, ...]
    min_df: int
    max_df_ratio: float
    n_docs: int
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "doc_freq", tuple(self.doc_freq))
        if list(self.words) != sorted(self.words):
            raise ValueError("vocabulary words must be sorted")
        if len(self.words) != len(set(self.words)):
            raise ValueError("vocabulary words must be unique")
        if len(self.words) != len(self.doc_freq):
            raise ValueError("words and doc_freq lengths differ")
        object.__setattr__(self, "index", {w: i for i, w in enumerate(self.words)})

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def word_id(self, word):
        return self.index[word]

    def to_json(self):
        return {
            "words": list(self.words),
            "doc_freq": list(self.doc_freq),
            "min_df": self.min_df,
            "max_df_ratio": self.max_df_ratio,
            "n_docs": self.n_docs,
        }

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(
                words=tuple(obj["words"]),
                doc_freq=tuple(obj["doc_freq"]),
                min_df=obj["min_df"],
                max_df_ratio=obj["max_df_ratio"],
                n_docs=obj["n_docs"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"invalid vocabulary file: {exc}")

    def save(self, path):
        with atomic_write(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CorruptFile(f"{path}: {exc}")
        return cls.from_json(obj)


@dataclass(frozen=True)
class BowDocument:
    """Bag-of-words view of a document: word id -> positive count."""

    doc_id: str
    counts: dict

    def __post_init__(self):
        if any(c < 1 for c in self.counts.values()):
            raise ValueError("bag-of-words counts must be >= 1")

    def n_tokens(self):
        return sum(self.counts.values())


def build_vocabulary(docs, min_df=20, max_df_ratio=0.5, stopwords=None):
    """Build a document-frequency-filtered vocabulary over normalized tokens.

    A word is retained iff min_df <= df(word) <= floor(max_df_ratio * n_docs),
    both bounds inclusive. The defaults (20 and 0.5) drop rare typos and
    corpus-wide filler words on article-scale corpora; desk-scale corpora
    want smaller values.
    """
    if not docs:
        raise ValueError("docs must be nonempty")
    if min_df < 1:
        raise ValueError(f"min_df must be >= 1, got {min_df}")
    if not 0.0 < max_df_ratio <= 1.0:
        raise ValueError(f"max_df_ratio must be in (0, 1], got {max_df_ratio}")

    seen = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise DuplicateId(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)

    df = Counter()
    for doc in docs:
        df.update(set(normalize(tokenize(doc.text), stopwords)))

    n_docs = len(docs)
    # Integer df makes "df <= ratio * n" equivalent to "df <= floor(ratio * n)";
    # the tiny epsilon guards against 0.5 * 4 style products landing below the
    # exact integer because of float rounding.
    max_df = math.floor(max_df_ratio * n_docs + 1e-9)
    kept = sorted(w for w, f in df.items() if min_df <= f <= max_df)
    if not kept:
        raise EmptyVocabulary(
            f"no word has document frequency in [{min_df}, {max_df}] over {n_docs} docs"
        )
    return Vocabulary(
        words=tuple(kept),
        doc_freq=tuple(df[w] for w in kept),
        min_df=min_df,
        max_df_ratio=max_df_ratio,
        n_docs=n_docs,
    )


def text_to_counts(text, word_index, stopwords=None):
    """Normalized in-vocabulary token counts for a text, given word -> id."""
    counts = Counter()
    for token in normalize(tokenize(text), stopwords):
        word_id = word_index.get(token)
        if word_id is not None:
            counts[word_id] += 1
    return dict(counts)


def doc_to_bow(doc, vocab, stopwords=None):
    """Bag-of-words for one document. Out-of-vocabulary tokens are dropped;
    a document with no in-vocabulary tokens yields empty counts, which later
    stages treat as an error or skip explicitly."""
    return BowDocument(doc_id=doc.doc_id, counts=text_to_counts(doc.text, vocab.index, stopwords))


def load_corpus(path):
    """Read a JSON Lines corpus: one {"id", "text", "images"} object per line."""
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptFile(f"{path}:{lineno}: invalid JSON: {exc}")
            try:
                doc = RawDocument(
                    doc_id=str(obj["id"]),
                    text=str(obj["text"]),
                    image_paths=tuple(str(p) for p in obj.get("images", [])),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptFile(f"{path}:{lineno}: invalid document: {exc}")
            if doc.doc_id in seen:
                raise DuplicateId(f"{path}:{lineno}: duplicate doc id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs


def save_corpus(docs, path):
    """Write documents as JSON Lines, one object per document."""
    with atomic_write(path, "w") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {"id": doc.doc_id, "text": doc.text, "images": list(doc.image_paths)},
                    sort_keys=True,
                )
            )
            fh.write("\n")
