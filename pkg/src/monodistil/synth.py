"""Synthetic bilingual corpus generator for desk-scale experiments.

Two artificial languages with disjoint surface vocabularies are sampled
from seeded order-2 Markov chains. Language A text additionally carries
two learnable downstream signals: capitalized entity words (a token
labeling task) and polarity marker words (a binary classification task).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Corpus
from .errors import ConfigurationError

N_REGULAR = 44
N_ENTITY = 10
N_MARKER = 6

O_TAG, B_TAG, I_TAG = "O", "B-ENT", "I-ENT"
POS_LABEL, NEG_LABEL = "pos", "neg"


@dataclass(frozen=True)
class LanguageSpec:
    name: str
    consonants: str
    vowels: str
    final_consonant: bool


LANG_A = LanguageSpec("langA", "kmnpst", "aio", final_consonant=False)
LANG_B = LanguageSpec("langB", "bdgrvz", "eu", final_consonant=True)


@dataclass(frozen=True)
class SynthConfig:
    docs_per_language: int = 1000
    heldout_docs: int = 120
    sentences_per_doc: int = 2
    min_words: int = 5
    max_words: int = 12
    entity_rate: float = 0.10
    marker_rate: float = 0.3
    transition_sharpness: float = 0.4
    classification_examples: int = 800
    tagging_examples: int = 400
    eval_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.docs_per_language < 1:
            raise ConfigurationError("docs_per_language must be at least 1")
        if not 0.0 <= self.entity_rate < 1.0:
            raise ConfigurationError(f"entity_rate must be in [0, 1), got {self.entity_rate}")
        if self.min_words < 3 or self.max_words < self.min_words:
            raise ConfigurationError("need max_words >= min_words >= 3")
        if self.transition_sharpness <= 0:
            raise ConfigurationError("transition_sharpness must be positive")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigurationError("eval_fraction must be in (0, 1)")


@dataclass
class Language:
    """Frozen word inventory plus the transition tables that drive sampling."""

    spec: LanguageSpec
    regular: list[str]
    entities: list[str]
    markers_pos: list[str]
    markers_neg: list[str]
    next_candidates: np.ndarray = field(repr=False)
    next_weights: np.ndarray = field(repr=False)

    @property
    def all_words(self) -> list[str]:
        return self.regular + self.entities + self.markers_pos + self.markers_neg


def _syllables(spec: LanguageSpec) -> list[str]:
    return [c + v for c in spec.consonants for v in spec.vowels]


def _word_inventory(spec: LanguageSpec, rng: np.random.Generator) -> list[str]:
    """Enumerate two-syllable shapes and take a seeded-shuffle prefix."""
    syl = _syllables(spec)
    candidates = [a + b for a in syl for b in syl]
    if spec.final_consonant:
        finals = list(spec.consonants)
        candidates = [w + finals[i % len(finals)] for i, w in enumerate(candidates)]
    order = rng.permutation(len(candidates))
    needed = N_REGULAR + N_ENTITY + N_MARKER
    return [candidates[i] for i in order[:needed]]


def build_language(spec: LanguageSpec, rng: np.random.Generator,
                   transition_sharpness: float = 0.4) -> Language:
    """Order-2 chain with a first-order skeleton.

    The four candidate successors are a function of the previous word
    alone; how probability mass splits among them depends on the full
    two-word context. Short models can learn the skeleton quickly while
    the pair-conditioned weights reward deeper context use.
    """
    words = _word_inventory(spec, rng)
    regular = words[:N_REGULAR]
    entities = [w.capitalize() for w in words[N_REGULAR:N_REGULAR + N_ENTITY]]
    markers = words[N_REGULAR + N_ENTITY:]
    half = N_MARKER // 2

    by_last = np.zeros((N_REGULAR, 4), dtype=np.int64)
    for w2 in range(N_REGULAR):
        by_last[w2] = rng.choice(N_REGULAR, size=4, replace=False)
    n_ctx = N_REGULAR * N_REGULAR
    cand = np.zeros((n_ctx, 4), dtype=np.int64)
    weights = np.zeros((n_ctx, 4), dtype=np.float64)
    for ctx in range(n_ctx):
        cand[ctx] = by_last[ctx % N_REGULAR]
        weights[ctx] = rng.dirichlet(np.full(4, transition_sharpness))
    return Language(spec, regular, entities, markers[:half], markers[half:], cand, weights)


def _sample_base_sentence(lang: Language, rng: np.random.Generator,
                          min_words: int, max_words: int) -> list[int]:
    n = int(rng.integers(min_words, max_words + 1))
    out = [int(rng.integers(N_REGULAR)), int(rng.integers(N_REGULAR))]
    while len(out) < n:
        ctx = out[-2] * N_REGULAR + out[-1]
        pick = rng.choice(4, p=lang.next_weights[ctx])
        out.append(int(lang.next_candidates[ctx, pick]))
    return out[:n]


def _insert_entities(base: list[str], lang: Language, rng: np.random.Generator,
                     entity_rate: float) -> tuple[list[str], list[str]]:
    """Independently insert an entity phrase before each base word.

    One insertion opportunity per base word keeps the entity count a
    clean binomial in the number of base words.
    """
    words: list[str] = []
    tags: list[str] = []
    for w in base:
        if rng.random() < entity_rate:
            phrase_len = 1 if rng.random() < 0.7 else 2
            picks = rng.integers(N_ENTITY, size=phrase_len)
            words.append(lang.entities[int(picks[0])])
            tags.append(B_TAG)
            for p in picks[1:]:
                words.append(lang.entities[int(p)])
                tags.append(I_TAG)
        words.append(w)
        tags.append(O_TAG)
    return words, tags


def _insert_markers(words: list[str], lang: Language, rng: np.random.Generator,
                    polarity: int) -> list[str]:
    pool = lang.markers_pos if polarity == 1 else lang.markers_neg
    k = int(rng.integers(1, 4))
    out = list(words)
    for _ in range(k):
        pos = int(rng.integers(len(out) + 1))
        out.insert(pos, pool[int(rng.integers(len(pool)))])
    return out


def _sample_document(lang: Language, rng: np.random.Generator, cfg: SynthConfig) -> str:
    sentences = []
    for _ in range(cfg.sentences_per_doc):
        base_ids = _sample_base_sentence(lang, rng, cfg.min_words, cfg.max_words)
        words, _ = _insert_entities([lang.regular[i] for i in base_ids], lang, rng, cfg.entity_rate)
        if rng.random() < cfg.marker_rate:
            words = _insert_markers(words, lang, rng, int(rng.integers(2)))
        sentences.append(" ".join(words))
    return " ".join(sentences)


@dataclass
class SynthBundle:
    """Everything one seed produces: corpora, held-out text, and task splits."""

    lang_a: Corpus
    lang_b: Corpus
    mixed: Corpus
    heldout_a: Corpus
    cls_train: list[tuple[str, str]]
    cls_eval: list[tuple[str, str]]
    tag_train: list[tuple[list[str], list[str]]]
    tag_eval: list[tuple[list[str], list[str]]]


def generate_bundle(config: SynthConfig) -> SynthBundle:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    lang_a = build_language(LANG_A, rng, config.transition_sharpness)
    lang_b = build_language(LANG_B, rng, config.transition_sharpness)

    docs_a = [_sample_document(lang_a, rng, config) for _ in range(config.docs_per_language)]
    heldout = [_sample_document(lang_a, rng, config) for _ in range(config.heldout_docs)]
    docs_b = [_sample_document(lang_b, rng, config) for _ in range(config.docs_per_language)]

    mixed: list[str] = []
    for a, b in zip(docs_a, docs_b):
        mixed.append(a)
        mixed.append(b)

    cls_rows: list[tuple[str, str]] = []
    for _ in range(config.classification_examples):
        polarity = int(rng.integers(2))
        base_ids = _sample_base_sentence(lang_a, rng, config.min_words, config.max_words)
        words, _ = _insert_entities([lang_a.regular[i] for i in base_ids], lang_a, rng,
                                    config.entity_rate)
        words = _insert_markers(words, lang_a, rng, polarity)
        cls_rows.append((" ".join(words), POS_LABEL if polarity == 1 else NEG_LABEL))

    tag_rows: list[tuple[list[str], list[str]]] = []
    for _ in range(config.tagging_examples):
        base_ids = _sample_base_sentence(lang_a, rng, config.min_words, config.max_words)
        words, tags = _insert_entities([lang_a.regular[i] for i in base_ids], lang_a, rng,
                                       config.entity_rate)
        tag_rows.append((words, tags))

    n_cls_eval = max(1, int(len(cls_rows) * config.eval_fraction))
    n_tag_eval = max(1, int(len(tag_rows) * config.eval_fraction))
    return SynthBundle(
        lang_a=Corpus(docs_a, source="synthetic", language=LANG_A.name),
        lang_b=Corpus(docs_b, source="synthetic", language=LANG_B.name),
        mixed=Corpus(mixed, source="synthetic", language="mixed"),
        heldout_a=Corpus(heldout, source="synthetic", language=LANG_A.name),
        cls_train=cls_rows[n_cls_eval:],
        cls_eval=cls_rows[:n_cls_eval],
        tag_train=tag_rows[n_tag_eval:],
        tag_eval=tag_rows[:n_tag_eval],
    )


def generate_synthetic_bilingual(seed: int, docs_per_language: int) -> tuple[Corpus, Corpus, Corpus]:
    """Two disjoint-vocabulary corpora plus their interleaving."""
    bundle = generate_bundle(SynthConfig(docs_per_language=docs_per_language, seed=seed))
    return bundle.lang_a, bundle.lang_b, bundle.mixed


def write_tsv(rows: list[tuple[str, str]], path) -> None:
    lines = ["text\tlabel"] + [f"{text}\t{label}" for text, label in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_conll(rows: list[tuple[list[str], list[str]]], path) -> None:
    blocks = ["\n".join(f"{w} {t}" for w, t in zip(words, tags)) for words, tags in rows]
    Path(path).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")


def write_bundle(bundle: SynthBundle, out_dir) -> dict[str, str]:
    """Write every bundle component under ``out_dir`` with canonical names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "lang_a": out / "corpus_a.txt",
        "lang_b": out / "corpus_b.txt",
        "mixed": out / "corpus_mixed.txt",
        "heldout_a": out / "heldout_a.txt",
        "cls_train": out / "cls_train.tsv",
        "cls_eval": out / "cls_eval.tsv",
        "tag_train": out / "tag_train.conll",
        "tag_eval": out / "tag_eval.conll",
    }
    for key in ("lang_a", "lang_b", "mixed", "heldout_a"):
        corpus: Corpus = getattr(bundle, key)
        paths[key].write_text("\n".join(corpus.documents) + "\n", encoding="utf-8")
    write_tsv(bundle.cls_train, paths["cls_train"])
    write_tsv(bundle.cls_eval, paths["cls_eval"])
    write_conll(bundle.tag_train, paths["tag_train"])
    write_conll(bundle.tag_eval, paths["tag_eval"])
    for stem in ("cls_train", "cls_eval"):
        label_path = paths[stem].with_suffix(".labels")
        label_path.write_text(f"{NEG_LABEL}\n{POS_LABEL}\n", encoding="utf-8")
        paths[f"{stem}_labels"] = label_path
    return {k: str(v) for k, v in paths.items()}
