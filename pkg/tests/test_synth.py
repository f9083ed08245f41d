"""Synthetic bilingual corpus generator."""

import numpy as np
import pytest

from monodistil.errors import ConfigurationError
from monodistil.synth import (
    LANG_A,
    LANG_B,
    N_ENTITY,
    N_MARKER,
    N_REGULAR,
    SynthConfig,
    build_language,
    generate_bundle,
    generate_synthetic_bilingual,
    write_bundle,
)


def _words_of(corpus):
    out = set()
    for doc in corpus:
        out.update(doc.split())
    return out


class TestLanguageInventory:
    def test_word_type_budget(self):
        rng = np.random.Generator(np.random.PCG64(0))
        lang = build_language(LANG_A, rng)
        assert len(lang.regular) == N_REGULAR
        assert len(lang.entities) == N_ENTITY
        assert len(lang.markers_pos) + len(lang.markers_neg) == N_MARKER
        assert len(set(lang.all_words)) == N_REGULAR + N_ENTITY + N_MARKER

    def test_entities_are_capitalized(self):
        rng = np.random.Generator(np.random.PCG64(1))
        lang = build_language(LANG_B, rng)
        assert all(w[0].isupper() for w in lang.entities)
        assert all(w[0].islower() for w in lang.regular)

    def test_transition_weights_are_distributions(self):
        rng = np.random.Generator(np.random.PCG64(2))
        lang = build_language(LANG_A, rng)
        assert lang.next_weights.shape == (N_REGULAR * N_REGULAR, 4)
        np.testing.assert_allclose(lang.next_weights.sum(axis=1), 1.0, atol=1e-9)
        # candidate successors depend on the last word only
        ctx_a = 3 * N_REGULAR + 17
        ctx_b = 40 * N_REGULAR + 17
        assert (lang.next_candidates[ctx_a] == lang.next_candidates[ctx_b]).all()


class TestBundleShape:
    def test_split_sizes(self, small_bundle):
        assert len(small_bundle.lang_a) == 40
        assert len(small_bundle.lang_b) == 40
        assert len(small_bundle.mixed) == 80
        assert len(small_bundle.heldout_a) == 10
        assert len(small_bundle.cls_eval) == 200
        assert len(small_bundle.cls_train) == 600
        assert len(small_bundle.tag_eval) == 100
        assert len(small_bundle.tag_train) == 300

    def test_mixed_interleaves_languages(self, small_bundle):
        assert small_bundle.mixed.documents[0] == small_bundle.lang_a.documents[0]
        assert small_bundle.mixed.documents[1] == small_bundle.lang_b.documents[0]

    def test_surface_vocabularies_are_disjoint(self, small_bundle):
        words_a = {w.lower() for w in _words_of(small_bundle.lang_a)}
        words_b = {w.lower() for w in _words_of(small_bundle.lang_b)}
        assert words_a and words_b
        assert not words_a & words_b

    def test_language_alphabets(self, small_bundle):
        chars_a = {c for w in _words_of(small_bundle.lang_a) for c in w.lower()}
        chars_b = {c for w in _words_of(small_bundle.lang_b) for c in w.lower()}
        assert chars_a <= set(LANG_A.consonants + LANG_A.vowels)
        assert chars_b <= set(LANG_B.consonants + LANG_B.vowels)


class TestDeterminism:
    def test_same_seed_same_bundle(self):
        cfg = SynthConfig(docs_per_language=15, heldout_docs=5, seed=9)
        a = generate_bundle(cfg)
        b = generate_bundle(cfg)
        assert a.lang_a.documents == b.lang_a.documents
        assert a.lang_b.documents == b.lang_b.documents
        assert a.cls_train == b.cls_train
        assert a.tag_eval == b.tag_eval

    def test_different_seed_different_text(self):
        a = generate_bundle(SynthConfig(docs_per_language=15, heldout_docs=5, seed=1))
        b = generate_bundle(SynthConfig(docs_per_language=15, heldout_docs=5, seed=2))
        assert a.lang_a.documents != b.lang_a.documents

    def test_task_example_count_does_not_disturb_corpora(self):
        base = SynthConfig(docs_per_language=15, heldout_docs=5, seed=4)
        more = SynthConfig(docs_per_language=15, heldout_docs=5, seed=4,
                           classification_examples=40, tagging_examples=20)
        a = generate_bundle(base)
        b = generate_bundle(more)
        assert a.lang_a.documents == b.lang_a.documents
        assert a.mixed.documents == b.mixed.documents

    def test_write_bundle_byte_identical(self, small_bundle, tmp_path):
        first = write_bundle(small_bundle, tmp_path / "one")
        second = write_bundle(small_bundle, tmp_path / "two")
        from pathlib import Path
        for key in first:
            assert Path(first[key]).read_bytes() == Path(second[key]).read_bytes()

    def test_write_bundle_canonical_names(self, small_bundle, tmp_path):
        paths = write_bundle(small_bundle, tmp_path / "out")
        from pathlib import Path
        names = {Path(p).name for p in paths.values()}
        assert {"corpus_a.txt", "corpus_b.txt", "corpus_mixed.txt", "heldout_a.txt",
                "cls_train.tsv", "cls_eval.tsv", "tag_train.conll", "tag_eval.conll",
                "cls_train.labels", "cls_eval.labels"} == names


class TestTaggingRows:
    def test_entity_rate_matches_config(self, small_bundle):
        rows = small_bundle.tag_train + small_bundle.tag_eval
        n_b = sum(tags.count("B-ENT") for _, tags in rows)
        n_opportunities = sum(tags.count("O") for _, tags in rows)
        sigma = np.sqrt(n_opportunities * 0.10 * 0.90)
        assert abs(n_b - 0.10 * n_opportunities) < 3 * sigma

    def test_tag_inventory_and_phrase_structure(self, small_bundle):
        for words, tags in small_bundle.tag_train + small_bundle.tag_eval:
            assert len(words) == len(tags)
            assert set(tags) <= {"O", "B-ENT", "I-ENT"}
            for i, tag in enumerate(tags):
                if tag == "I-ENT":
                    assert tags[i - 1] == "B-ENT"
                if tag in ("B-ENT", "I-ENT"):
                    assert words[i][0].isupper()
                else:
                    assert words[i][0].islower()


class TestClassificationRows:
    def test_marker_pools_are_pure(self, small_bundle):
        rows = small_bundle.cls_train + small_bundle.cls_eval
        pos_words = {w for text, lab in rows if lab == "pos" for w in text.split()}
        neg_words = {w for text, lab in rows if lab == "neg" for w in text.split()}
        pos_only = pos_words - neg_words
        neg_only = neg_words - pos_words
        # shared filler saturates both classes, so the leftovers are the markers
        assert len(pos_only) == N_MARKER // 2
        assert len(neg_only) == N_MARKER // 2
        for text, lab in rows:
            words = text.split()
            marker_hits = [w for w in words if w in (pos_only if lab == "pos" else neg_only)]
            foreign = [w for w in words if w in (neg_only if lab == "pos" else pos_only)]
            assert 1 <= len(marker_hits) <= 3
            assert not foreign

    def test_labels_are_binary(self, small_bundle):
        labels = {lab for _, lab in small_bundle.cls_train + small_bundle.cls_eval}
        assert labels == {"pos", "neg"}


class TestConfigValidation:
    def test_bad_configs_rejected(self):
        with pytest.raises(ConfigurationError):
            SynthConfig(docs_per_language=0)
        with pytest.raises(ConfigurationError):
            SynthConfig(entity_rate=1.0)
        with pytest.raises(ConfigurationError):
            SynthConfig(min_words=2)
        with pytest.raises(ConfigurationError):
            SynthConfig(min_words=8, max_words=5)
        with pytest.raises(ConfigurationError):
            SynthConfig(transition_sharpness=0.0)
        with pytest.raises(ConfigurationError):
            SynthConfig(eval_fraction=1.0)

    def test_three_corpus_helper(self):
        lang_a, lang_b, mixed = generate_synthetic_bilingual(seed=5, docs_per_language=8)
        assert len(lang_a) == 8
        assert len(lang_b) == 8
        assert len(mixed) == 16
