import random
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixstack import textprep as tp
from mixstack.spellcheck import FrequencyLexicon
from mixstack.textprep import porter

from golden import PIPELINE_CASES, STEP_CASES


@pytest.mark.parametrize("name,fn,text,expected", STEP_CASES, ids=[f"{c[0]}:{c[2]}" for c in STEP_CASES])
def test_step_golden(name, fn, text, expected):
    assert fn(text) == expected


@pytest.mark.parametrize("text,expected", PIPELINE_CASES, ids=[c[0][:30] for c in PIPELINE_CASES])
def test_pipeline_golden(text, expected):
    assert tp.run_pipeline(text, tp.PipelineConfig.default()) == expected


@pytest.mark.parametrize("text", [c[0] for c in PIPELINE_CASES])
def test_pipeline_idempotent(text):
    pipe = tp.Pipeline(tp.PipelineConfig.default())
    once = pipe(text)
    assert pipe(" ".join(once)) == once


def test_tweet_loses_at_sign():
    tokens = tp.run_pipeline(PIPELINE_CASES[0][0], tp.PipelineConfig.default())
    assert "USER" in tokens and not any("@" in t for t in tokens)


def test_empty_step_list_is_whitespace_split():
    assert tp.run_pipeline("  Hello,  World!! ", tp.PipelineConfig(steps=[])) == ["Hello,", "World!!"]


def test_unknown_step_rejected():
    with pytest.raises(tp.PipelineError, match="frobnicate"):
        tp.PipelineConfig(steps=["frobnicate"])


def test_spell_step_requires_lexicon():
    with pytest.raises(tp.PipelineError):
        tp.PipelineConfig(steps=["tokenize", "spell_correct"])


def test_optional_tail_steps():
    lexicon = FrequencyLexicon({"forget": 100, "game": 5})
    cfg = tp.PipelineConfig.default(spell=lexicon, stopwords=True, stemmer="english")
    assert cfg.steps[-3:] == ["spell_correct", "remove_stopwords", "stem"]
    assert tp.run_pipeline("Don't frgt the games @x", cfg) == ["forget", "game", "USER"]


def test_config_dict_round_trip():
    cfg = tp.PipelineConfig.default(spell=FrequencyLexicon({"a": 1}), stopwords=True)
    again = tp.PipelineConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert tp.run_pipeline("I can't 4ever", again) == tp.run_pipeline("I can't 4ever", cfg)


# ------------------------------------------------------------------ demojize

def test_unknown_emoji_dropped_or_kept():
    table = tp.ResourceTable("emoji", {"😊": "blush"}, case_sensitive=True)
    assert tp.demojize("hi 🦜 😊", table) == "hi blush"
    assert tp.demojize("hi 🦜", table, keep_unknown=True) == "hi 🦜"


def test_multi_codepoint_emoji_matched_whole():
    table = tp.ResourceTable("emoji", {"👍🏽": "thumbsup_medium", "👍": "thumbsup"}, case_sensitive=True)
    assert tp.demojize("ok👍🏽👍", table) == "ok thumbsup_medium thumbsup"


# ------------------------------------------------------------------ patterns

def test_stray_at_and_embedded_http():
    assert tp.replace_patterns("@ home xhttpfoo").split() == ["home", "URL"]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(["@bob", "@", "http://a.b", "xhttps", "#tag", "word", "a@b", "www.x.org",
                                 "##", "@@x", "#", "hi!"]), max_size=8).map(" ".join))
def test_replace_patterns_leaves_no_handles_or_links(text):
    out = tp.replace_patterns(text)
    assert "http" not in out.lower()
    assert not any(tok.startswith("@") for tok in out.split())


# ------------------------------------------------------------------ elongation

@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="aab!😊 é", max_size=40))
def test_no_triple_runs_after_collapse(text):
    assert re.search(r"(.)\1\1", tp.collapse_elongation(text), re.DOTALL) is None


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="xyz", max_size=30), st.integers(1, 4))
def test_collapse_respects_max_repeat(text, k):
    out = tp.collapse_elongation(text, k)
    assert re.search(r"(.)\1{%d}" % k, out) is None
    assert tp.collapse_elongation(out, k) == out


def test_collapse_rejects_bad_max_repeat():
    with pytest.raises(tp.PipelineError):
        tp.collapse_elongation("aaa", 0)


# ------------------------------------------------------------------ abbreviations

def test_expansion_case_insensitive_and_keeps_edge_punctuation():
    assert tp.expand_abbreviations("ABT, Can’t!", tp.default_contractions(), tp.default_acronyms()) == \
        "about, cannot!"


def test_contractions_consulted_before_acronyms():
    c = tp.ResourceTable("contractions", {"ur": "you are"})
    a = tp.ResourceTable("acronyms", {"ur": "your"})
    assert tp.expand_abbreviations("ur", c, a) == "you are"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["abt", "u", "4ever", "table", "cb", "ABT!", "x"]), max_size=10))
def test_single_word_tables_preserve_token_count(tokens):
    c = tp.ResourceTable("contractions", {})
    a = tp.ResourceTable("acronyms", {"abt": "about", "u": "you", "4ever": "forever", "cb": "comeback"})
    assert len(tp.expand_abbreviations(" ".join(tokens), c, a).split()) == len(tokens)


def test_shipped_tables_have_no_chained_entries():
    for table in (tp.default_contractions(), tp.default_acronyms()):
        values = {w for v in table.entries.values() for w in v.split()}
        assert not values & set(table.entries), table.name


# ------------------------------------------------------------------ punctuation, case, stopwords

def test_punctuation_rules():
    assert tp.remove_punctuation("y'know well-known :) thumbs_up") == "yknow well known thumbs_up"


def test_lowercase_keeps_sentinels():
    assert tp.lowercase(["URL", "USER", "Hello"]) == ["URL", "USER", "hello"]


def test_stopword_filter():
    stops = tp.StopList(frozenset({"the", "is"}))
    assert tp.remove_stopwords(["the", "game", "is", "fun"], stops) == ["game", "fun"]
    assert tp.remove_stopwords([], stops) == []
    assert tp.remove_stopwords(["the", "is"], stops) == []


def test_stoplist_must_be_lowercase():
    with pytest.raises(tp.PipelineError):
        tp.StopList(frozenset({"The"}))


def test_shipped_stoplist():
    stops = tp.default_stopwords().words
    assert {"the", "is", "i", "and"} <= stops


# ------------------------------------------------------------------ stemming

@pytest.mark.parametrize("word,stem", [("running", "run"), ("caresses", "caress"), ("cat", "cat"),
                                       ("ponies", "poni"), ("relational", "relat"), ("URL", "URL")])
def test_porter_examples(word, stem):
    assert tp.stem_english(word) == stem


def test_porter_matches_reference_implementation():
    nltk_porter = pytest.importorskip("nltk.stem.porter")
    reference = nltk_porter.PorterStemmer(mode=nltk_porter.PorterStemmer.ORIGINAL_ALGORITHM)
    rnd = random.Random(0)
    suffixes = ["", "s", "es", "ies", "ed", "ing", "ational", "ness", "ful", "ization", "ly", "ement", "able"]
    for _ in range(3000):
        stem = "".join(rnd.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(rnd.randint(1, 7)))
        word = stem + rnd.choice(suffixes)
        assert porter.stem(word) == reference.stem(word, to_lowercase=False), word


def test_stemmer_registry():
    assert tp.get_stemmer("none")("running") == "running"
    for name in ("spanish", "greek", "turkish"):
        with pytest.raises(tp.PipelineError, match="plug-in"):
            tp.get_stemmer(name)
    with pytest.raises(tp.PipelineError, match="unknown"):
        tp.get_stemmer("klingon")
    tp.register_stemmer("upper", str.upper)
    try:
        cfg = tp.PipelineConfig(steps=["tokenize", "stem"], stemmer="upper")
        assert tp.run_pipeline("ab cd", cfg) == ["AB", "CD"]
    finally:
        del tp.STEMMERS["upper"]


def test_input_is_nfc_normalized():
    decomposed = "cafe\u0301"
    assert tp.run_pipeline(decomposed, tp.PipelineConfig.default()) == ["café"]
