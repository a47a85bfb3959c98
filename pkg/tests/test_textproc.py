import pytest
from hypothesis import given, strategies as st

from kinject.captions import CaptionRecord, Granularity
from kinject.errors import EmptyCorpusError, EmptyTokensError
from kinject.textproc import (
    UNK_ID,
    UNK_TOKEN,
    Vocabulary,
    build_vocab,
    encode_ids,
    read_vocab,
    tokenize,
    write_vocab,
)


def rec(text):
    return CaptionRecord("x", ("d",), Granularity.COARSE, text)


def test_tokenize_plain():
    assert tokenize("Pneumonia with consolidation") == [
        "pneumonia", "with", "consolidation",
    ]


def test_tokenize_negation_scope():
    assert tokenize("No evidence of pneumothorax or pleural effusion") == [
        "neg_evidence", "neg_of", "neg_pneumothorax", "neg_or", "neg_pleural",
        "neg_effusion",
    ]


def test_tokenize_scope_resets_at_period():
    assert tokenize("Edema. No pneumothorax") == ["edema", "neg_pneumothorax"]
    assert tokenize("No edema. Pneumonia") == ["neg_edema", "pneumonia"]


def test_tokenize_without_cue():
    assert tokenize("Findings without effusion") == ["findings", "neg_effusion"]


def test_tokenize_empty_text():
    assert tokenize("") == []


words = st.lists(
    st.sampled_from(["no", "without", ".", "edema", "pneumonia", "of", "or", "lobe"]),
    max_size=12,
)


@given(words)
def test_cue_tokens_never_emitted_unprefixed(ws):
    for tok in tokenize(" ".join(ws)):
        assert tok not in ("no", "without")
        assert not tok.startswith("neg_no")  # cues dropped, not prefixed


@given(words)
def test_tokens_are_lowercase_alnum(ws):
    for tok in tokenize(" ".join(ws).upper()):
        body = tok[4:] if tok.startswith("neg_") else tok
        assert body.isalnum() and body == body.lower()


def test_build_vocab_frequency_then_alpha():
    vocab = build_vocab([rec("a b b")])
    assert vocab.tokens == ("b", "a")
    assert len(vocab) == 3  # includes UNK


def test_build_vocab_min_count():
    vocab = build_vocab([rec("a b b")], min_count=2)
    assert vocab.tokens == ("b",)


def test_build_vocab_same_multiset_same_vocab():
    a = build_vocab([rec("a b"), rec("b c")])
    b = build_vocab([rec("c b"), rec("b a")])
    assert a.tokens == b.tokens


def test_build_vocab_empty_corpus():
    with pytest.raises(EmptyCorpusError):
        build_vocab([])


def test_encode_ids_known_unknown():
    vocab = Vocabulary.from_tokens(["edema"])
    assert encode_ids(vocab, ["edema"]) == [vocab.id_of("edema")]
    assert encode_ids(vocab, ["zzz"]) == [UNK_ID]


def test_encode_ids_empty():
    vocab = Vocabulary.from_tokens(["edema"])
    with pytest.raises(EmptyTokensError):
        encode_ids(vocab, [])


def test_vocab_round_trip_ids():
    vocab = build_vocab([rec("a b b c c c")])
    for tok in vocab.tokens:
        assert vocab.token_of(vocab.id_of(tok)) == tok
    for i in range(1, len(vocab)):
        assert vocab.id_of(vocab.token_of(i)) == i
    assert vocab.token_of(UNK_ID) == UNK_TOKEN


def test_vocab_file_round_trip(tmp_path):
    vocab = build_vocab([rec("a b b c c c")])
    path = tmp_path / "vocab.txt"
    write_vocab(path, vocab)
    assert read_vocab(path).tokens == vocab.tokens
    # one token per line, line number = id - 1
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == list(vocab.tokens)
