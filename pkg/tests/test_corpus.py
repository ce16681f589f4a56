import json

import numpy as np
import pytest

from scriptpool.corpus import (
    Batch,
    ByteSequence,
    CorpusDoc,
    byte_to_word_ratio,
    derive_prior,
    gen_synthetic_parallel,
    load_corpus,
    make_batches,
    pack_rows,
    pad_id,
    save_corpus,
    tag_id,
)
from scriptpool.errors import (
    EmptyCorpusError,
    InvalidRatioError,
    ScriptMismatchError,
    UnrealizableLengthError,
    ZeroWordsError,
)
from scriptpool.scripts import CYRILLIC, INDIC, LATIN, detect_script

EN_SENTENCE = "Fellow wrestlers also paid tribute to Luna."  # 43 UTF-8 bytes


def doc(text, lang="x", script=LATIN):
    return CorpusDoc(text=text, lang=lang, script=script)


def test_ratio_english_sentence():
    assert len(EN_SENTENCE.encode()) == 43
    ratio = byte_to_word_ratio([doc(EN_SENTENCE)])
    assert ratio == pytest.approx(43 / 7)


def test_ratio_tiny():
    assert byte_to_word_ratio([doc("a b")]) == pytest.approx(1.5)


def test_ratio_is_mean_of_per_doc_ratios():
    # 4 bytes / 1 word = 4.0 and 6 bytes / 1 word = 6.0
    ratio = byte_to_word_ratio([doc("abcd"), doc("abcdef")])
    assert ratio == pytest.approx(5.0)


def test_ratio_invariances():
    docs = [doc("alpha beta"), doc("gamma delta epsilon"), doc("zeta")]
    base = byte_to_word_ratio(docs)
    assert byte_to_word_ratio(docs[::-1]) == pytest.approx(base)
    assert byte_to_word_ratio(docs + docs) == pytest.approx(base)


def test_ratio_errors():
    with pytest.raises(EmptyCorpusError):
        byte_to_word_ratio([])
    with pytest.raises(ZeroWordsError):
        byte_to_word_ratio([doc("   ")])


def test_derive_prior():
    assert derive_prior(5.0) == pytest.approx(0.2)
    assert derive_prior(20.0) == pytest.approx(0.05)
    assert derive_prior(1.0) == 1.0
    with pytest.raises(InvalidRatioError):
        derive_prior(0.5)


def test_prior_of_any_ratio_is_valid_probability():
    rng = np.random.default_rng(0)
    for _ in range(50):
        words = ["w" * rng.integers(1, 12) for _ in range(rng.integers(1, 9))]
        ratio = byte_to_word_ratio([doc(" ".join(words))])
        assert 0.0 < derive_prior(max(ratio, 1.0)) <= 1.0


# -- synthetic parallel corpus ----------------------------------------------

def test_synthetic_shapes_and_lengths():
    docs = gen_synthetic_parallel(2, 3, {LATIN: 5, INDIC: 21}, seed=1)
    assert len(docs) == 4
    latin = [d for d in docs if d.script == LATIN]
    indic = [d for d in docs if d.script == INDIC]
    for d in latin:
        assert len(d.text.encode()) == 3 * 5 + 2
    for d in indic:
        assert len(d.text.encode()) == 3 * 21 + 2


def test_synthetic_word_counts_parallel():
    docs = gen_synthetic_parallel(5, 4, {LATIN: 4, CYRILLIC: 10}, seed=3)
    for d in docs:
        assert len(d.text.split()) == 4


def test_synthetic_unrealizable_length():
    with pytest.raises(UnrealizableLengthError):
        gen_synthetic_parallel(1, 3, {INDIC: 7}, seed=0)  # telugu codepoints are 3 bytes
    with pytest.raises(UnrealizableLengthError):
        gen_synthetic_parallel(1, 3, {CYRILLIC: 5}, seed=0)


def test_synthetic_ratio_near_target():
    docs = gen_synthetic_parallel(30, 6, {LATIN: 5}, seed=5)
    ratio = byte_to_word_ratio(docs)
    assert abs(ratio - 5.0) / 5.0 < 0.2  # word size plus the separator share


def test_synthetic_detected_script_matches_request():
    docs = gen_synthetic_parallel(3, 4, {LATIN: 4, CYRILLIC: 10, INDIC: 18}, seed=9)
    for d in docs:
        assert detect_script(d.text) == d.script


def test_synthetic_deterministic():
    a = gen_synthetic_parallel(4, 5, {LATIN: 4, INDIC: 18}, seed=11)
    b = gen_synthetic_parallel(4, 5, {LATIN: 4, INDIC: 18}, seed=11)
    assert [d.text for d in a] == [d.text for d in b]


# -- packing and batching -----------------------------------------------------

def test_long_doc_split_lengths():
    text = "a" * 600
    rows = pack_rows([doc(text)], max_len=512)
    lengths = [len(r) for _, r in rows]
    assert lengths == [513, 89]  # tag included
    assert all(r[0] == tag_id(LATIN) for _, r in rows)


def test_split_never_breaks_codepoints():
    text = "తోటిమలల" * 40  # 3-byte codepoints
    rows = pack_rows([doc(text, script=INDIC)], max_len=64)
    for _, row in rows:
        bytes(row[1:].astype(np.uint8).tolist()).decode("utf-8")  # must not raise


def test_packing_conserves_bytes():
    docs = gen_synthetic_parallel(10, 5, {LATIN: 4, CYRILLIC: 10, INDIC: 18}, seed=2)
    total = sum(len(d.text.encode()) for d in docs)
    rows = pack_rows(docs, max_len=50)
    assert sum(len(r) - 1 for _, r in rows) == total


def test_rows_single_script_with_tag_first():
    docs = gen_synthetic_parallel(6, 5, {LATIN: 4, CYRILLIC: 10}, seed=4)
    for script, row in pack_rows(docs, max_len=40):
        assert row[0] == tag_id(script)
        assert np.all(row[1:] < 256)


def test_batches_deterministic_and_padded():
    docs = gen_synthetic_parallel(8, 5, {LATIN: 4, INDIC: 18}, seed=6)
    b1 = list(make_batches(docs, max_len=32, batch_size=4, seed=0))
    b2 = list(make_batches(docs, max_len=32, batch_size=4, seed=0))
    assert len(b1) == len(b2) > 0
    for x, y in zip(b1, b2):
        assert np.array_equal(x.tokens, y.tokens)
        assert x.tokens.shape[1] == 33
        pad = pad_id(3)
        for i in range(x.tokens.shape[0]):
            assert np.all(x.tokens[i, x.lengths[i]:] == pad)
            assert not np.any(x.tokens[i, :x.lengths[i]] == pad)


def test_batch_rows_recover_rows():
    docs = gen_synthetic_parallel(4, 5, {LATIN: 4}, seed=8)
    for batch in make_batches(docs, max_len=32, batch_size=2, seed=1):
        for i in range(batch.tokens.shape[0]):
            row = batch.row(i)
            assert row[0] >= 256
            assert len(row) == batch.lengths[i]


def test_byte_sequence_round_trip():
    seq = ByteSequence.from_text("hello")
    row = seq.to_row()
    assert row[0] == tag_id(LATIN)
    assert bytes(row[1:].tolist()).decode() == "hello"


# -- corpus files ---------------------------------------------------------------

def test_jsonl_round_trip(tmp_path):
    docs = gen_synthetic_parallel(3, 4, {LATIN: 4, CYRILLIC: 10}, seed=12)
    path = tmp_path / "c.jsonl"
    save_corpus(docs, path)
    loaded = load_corpus(path)
    assert [d.text for d in loaded] == [d.text for d in docs]
    assert [d.script for d in loaded] == [d.script for d in docs]


def test_jsonl_script_mismatch_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"text": "hello", "lang": "en", "script": "cyrillic"}) + "\n")
    with pytest.raises(ScriptMismatchError):
        load_corpus(path)
