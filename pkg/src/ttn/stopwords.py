"""Built-in English stopword list.

A compact general-purpose list (~150 entries). Callers can replace it with
their own set loaded from a file, one word per line, via load_stopwords().
"""

DEFAULT_STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are as at
    be because been before being below between both but by
    came can cannot come could did do does doing down during
    each even every few for from further
    get go got had has have having he her here hers herself him himself his
    how however i if in into is it its itself just like
    made make many may me might more most much must my myself
    never no nor not now of off on once one only or other our ours ourselves
    out over own put said same say see seen shall she should since so some
    still such take than that the their theirs them themselves then there
    these they this those through to too under until up upon us used using
    very was we well were what when where which while who whom why will with
    would you your yours yourself yourselves
    """.split()
)


def load_stopwords(path):
    """Read a stopword file: one word per line, blank lines ignored.

    Words are lowercased so the file does not have to match the tokenizer's
    casing convention.
    """
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word:
                words.add(word)
    return frozenset(words)
