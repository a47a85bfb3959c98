"""Tokenization with negation scoping, plus vocabulary build/encode.

Tokens following a negation cue ("no", "without") are prefixed "neg_"
until the next sentence boundary, so absence statements occupy their own
region of bag-of-tokens space. Cue tokens themselves are dropped.
"""

import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import EmptyCorpusError, EmptyTokensError

UNK_ID = 0
UNK_TOKEN = "<unk>"

_NEGATION_CUES = {"no", "without"}
_TOKEN_OR_PERIOD = re.compile(r"[a-z0-9]+|\.")


def tokenize(text):
    """Lowercase, split on non-alphanumeric runs, apply negation scoping."""
    tokens = []
    negated = False
    for piece in _TOKEN_OR_PERIOD.findall(text.lower()):
        if piece == ".":
            negated = False
            continue
        if piece in _NEGATION_CUES:
            negated = True
            continue
        tokens.append("neg_" + piece if negated else piece)
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple  # non-reserved tokens; id = index + 1, id 0 is UNK
    index: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_tokens(cls, tokens):
        tokens = tuple(tokens)
        return cls(tokens=tokens, index={t: i + 1 for i, t in enumerate(tokens)})

    def __len__(self):
        return len(self.tokens) + 1

    def id_of(self, token):
        return self.index.get(token, UNK_ID)

    def token_of(self, token_id):
        if token_id == UNK_ID:
            return UNK_TOKEN
        return self.tokens[token_id - 1]

    def __contains__(self, token):
        return token in self.index


def build_vocab(corpus, min_count=1):
    """Vocabulary over a caption corpus, ordered by (count desc, token asc)."""
    if not corpus:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for rec in corpus:
        counts.update(tokenize(rec.text))
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary.from_tokens(kept)


def encode_ids(vocab, tokens):
    """Map surface tokens to vocabulary ids; unknowns become UNK (0)."""
    if not tokens:
        raise EmptyTokensError("cannot encode an empty token list")
    return [vocab.id_of(t) for t in tokens]


def write_vocab(path, vocab):
    # One token per line, line number = id - 1; UNK is implicit.
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for token in vocab.tokens:
            fh.write(token + "\n")


def read_vocab(path):
    with open(path, "r", encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh if line.strip()]
    return Vocabulary.from_tokens(tokens)
