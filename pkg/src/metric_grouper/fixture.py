"""Bundled synthetic dataset for tests, demos and smoke runs.

Two gold groups with three phrases each. The word vectors are built so
that phrase vectors alone are deliberately confusable across groups
(each phrase has a near-twin in the other group), while context
adjectives separate the groups cleanly. Clustering raw phrase vectors
therefore fails, and the learned metric has real signal to find.

The taxonomy is a balanced three-level tree over eight leaves with unit
leaf counts, giving round information-content values: leaves ln 8,
three-leaf subtree roots ln 4, the two main branches ln 2, the root 0.
Phrases within a group sit under one branch and are lexicon-compatible;
phrases across groups share only the root and fall below the default
incompatibility threshold.
"""
from __future__ import annotations

import os

import numpy as np

from .corpus import AnnotatedCorpus, AnnotatedSentence, Mention, WordVectorTable
from .lexicon import build_taxonomy
from .network import TrainConfig

DIMENSION = 8

GROUP_PHRASES = {
    0: ("picture", "image", "photo"),
    1: ("sound", "audio", "volume"),
}

# Cross-group twins share a pair axis, so phrase vectors carry no group
# signal: AP-style clustering lands near 0.5 purity by construction.
PHRASE_AXIS = {
    "picture": 2, "sound": 2,
    "image": 3, "audio": 3,
    "photo": 4, "volume": 4,
}

GROUP_ADJECTIVES = {
    0: ("sharp", "clear", "bright", "crisp", "vivid", "detailed"),
    1: ("loud", "rich", "deep", "booming", "muffled", "thumping"),
}

FUNCTION_WORDS = ("the", "is", "and", "very", "quite", "really",
                  "looks", "seems", "feels", "a")

SPARE_LEAF_WORDS = ("display", "speaker")

TEMPLATES = (
    ("the", None, "is", "ADJ", "and", "ADJ"),
    ("the", None, "looks", "ADJ"),
    (None, "is", "very", "ADJ"),
    ("the", None, "is", "quite", "ADJ"),
    ("the", None, "seems", "ADJ", "and", "ADJ"),
    ("a", "really", "ADJ", None),
)


def make_vectors(seed=7, noise=0.05):
    """Deterministic 8-dimensional word vectors for the fixture."""
    rng = np.random.default_rng(seed)
    vectors = {}

    def noisy(base):
        return base + noise * rng.standard_normal(DIMENSION)

    for group, adjectives in GROUP_ADJECTIVES.items():
        direction = 1.0 if group == 0 else -1.0
        for word in adjectives:
            base = np.zeros(DIMENSION)
            base[0] = 2.0 * direction
            base[1] = 2.0 * direction
            vectors[word] = noisy(base)
    for phrase, axis in PHRASE_AXIS.items():
        base = np.zeros(DIMENSION)
        base[axis] = 2.0
        vectors[phrase] = noisy(base)
    for word in FUNCTION_WORDS + SPARE_LEAF_WORDS:
        vectors[word] = noisy(np.zeros(DIMENSION))
    return WordVectorTable(DIMENSION, vectors)


def make_corpus(sentences_per_phrase=10, seed=11):
    """Labeled corpus: every sentence mentions exactly one phrase."""
    rng = np.random.default_rng(seed)
    sentences = []
    for group in sorted(GROUP_PHRASES):
        for phrase in GROUP_PHRASES[group]:
            adjectives = GROUP_ADJECTIVES[group]
            for _ in range(sentences_per_phrase):
                template = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
                tokens = []
                start = None
                for slot in template:
                    if slot is None:
                        start = len(tokens)
                        tokens.append(phrase)
                    elif slot == "ADJ":
                        tokens.append(adjectives[int(rng.integers(len(adjectives)))])
                    else:
                        tokens.append(slot)
                mention = Mention(phrase, start, start + 1, group)
                sentences.append(AnnotatedSentence(tuple(tokens), (mention,)))
    return AnnotatedCorpus(sentences)


def taxonomy_record_dicts():
    """Concept and word records for the balanced eight-leaf taxonomy."""
    records = [
        {"concept": "root", "parents": [], "count": 0.0},
        {"concept": "visual", "parents": ["root"], "count": 0.0},
        {"concept": "audio-branch", "parents": ["root"], "count": 0.0},
        {"concept": "visual-a", "parents": ["visual"], "count": 0.0},
        {"concept": "visual-b", "parents": ["visual"], "count": 0.0},
        {"concept": "audio-a", "parents": ["audio-branch"], "count": 0.0},
        {"concept": "audio-b", "parents": ["audio-branch"], "count": 0.0},
    ]
    leaves = [
        ("leaf-picture", "visual-a", "picture"),
        ("leaf-image", "visual-a", "image"),
        ("leaf-photo", "visual-b", "photo"),
        ("leaf-display", "visual-b", "display"),
        ("leaf-sound", "audio-a", "sound"),
        ("leaf-audio", "audio-a", "audio"),
        ("leaf-volume", "audio-b", "volume"),
        ("leaf-speaker", "audio-b", "speaker"),
    ]
    for leaf, parent, word in leaves:
        records.append({"concept": leaf, "parents": [parent], "count": 1.0})
        records.append({"word": word, "concepts": [leaf]})
    return records


def make_taxonomy():
    return build_taxonomy(taxonomy_record_dicts())


def train_config(seed=42, epochs=30):
    """Training defaults sized for the fixture."""
    return TrainConfig(seed=seed, epochs=epochs)


def make_network(seed=42, dropout_rate=0.5):
    """Fresh fixture-sized network (16 -> 32 -> 16 -> 8).

    The hidden layers are kept wide relative to the input: with 50%
    dropout, narrow layers turn the context pathway into noise and the
    metric settles for separating phrases by their vector axes alone.
    """
    from .network import MetricNetwork

    return MetricNetwork.create(
        DIMENSION, mode="attention", output_dim=FIXTURE_OUTPUT_DIM,
        n_layers=3, hidden_dims=list(FIXTURE_HIDDEN_DIMS),
        dropout_rate=dropout_rate, seed=seed)


FIXTURE_OUTPUT_DIM = 8
FIXTURE_HIDDEN_DIMS = (32, 16)
FIXTURE_ETA = 0.3

CONFIG_INI = """\
[pairs]
eta = 0.3
seed = 42

[composition]
mode = attention

[network]
output_dim = 8
layers = 3
hidden_dims = 32,16
activation = tanh
dropout_rate = 0.5

[training]
margin_t = 3.0
beta = 2.0
lambda = 0.002
learning_rate = 0.03
epochs = 30
seed = 42
finetune_attention = true

[clustering]
n_init = 10
max_iter = 100
seed = 42

[evaluation]
runs = 10
seed = 42
methods = metric,avg,ap
"""


def write_fixture(out_dir):
    """Materialize corpus, vectors, taxonomy and a matching config file.

    Returns the four paths (corpus, vectors, taxonomy, config).
    """
    from .corpus import save_corpus, save_word_vectors
    from .lexicon import save_taxonomy

    os.makedirs(out_dir, exist_ok=True)
    corpus_path = os.path.join(out_dir, "corpus.jsonl")
    vectors_path = os.path.join(out_dir, "vectors.txt")
    taxonomy_path = os.path.join(out_dir, "taxonomy.jsonl")
    config_path = os.path.join(out_dir, "config.ini")
    save_corpus(make_corpus(), corpus_path)
    save_word_vectors(make_vectors(), vectors_path)
    save_taxonomy(make_taxonomy(), taxonomy_path)
    with open(config_path, "w", encoding="utf-8") as fh:
        fh.write(CONFIG_INI)
    return corpus_path, vectors_path, taxonomy_path, config_path
