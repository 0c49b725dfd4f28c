"""Turn a (phrase, context) pair into one fixed-length input vector.

The attention mode scores every context word against the phrase vector,
softmax-normalizes the scores into weights, and concatenates the weighted
context average with the phrase vector. The avg/min/max modes replace the
weighted average with an elementwise reduction; the ap mode drops context
entirely and uses the phrase vector alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyContextError, UnknownPhraseError

MODES = ("attention", "avg", "min", "max", "ap")


@dataclass
class AttentionParams:
    """Score weights, one scalar per component of [context_word; phrase]."""
    w_a: np.ndarray

    def __post_init__(self):
        self.w_a = np.asarray(self.w_a, dtype=float)
        if self.w_a.ndim != 1:
            raise DimensionMismatchError("attention parameter must be a flat vector")
        if not np.all(np.isfinite(self.w_a)):
            raise ValueError("attention parameter has non-finite components")

    @classmethod
    def zeros(cls, word_dim):
        """Zero scores, which make the weighting start out uniform."""
        return cls(np.zeros(2 * word_dim))

    def copy(self):
        return AttentionParams(self.w_a.copy())


@dataclass
class ComposedInput:
    """The composed vector plus, for attention mode, the word weights."""
    x: np.ndarray
    attention_weights: np.ndarray | None = None


def attention_weights(context, p, params):
    """Softmax over per-word scores w_a . [e_i; p], max-subtracted.

    ``context`` is (n, d), ``p`` is (d,). Returns n nonnegative weights
    summing to one.
    """
    context = np.asarray(context, dtype=float)
    p = np.asarray(p, dtype=float)
    if context.ndim != 2 or context.shape[0] == 0:
        raise EmptyContextError("attention needs at least one context vector")
    d = context.shape[1]
    if p.shape != (d,):
        raise DimensionMismatchError(f"phrase vector has shape {p.shape}, expected ({d},)")
    if params.w_a.shape != (2 * d,):
        raise DimensionMismatchError(
            f"attention parameter has shape {params.w_a.shape}, expected ({2 * d},)")
    scores = context @ params.w_a[:d] + p @ params.w_a[d:]
    shifted = scores - scores.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def compose_vectors(context, p, params, mode):
    """Compose from raw arrays; the workhorse behind compose()."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    p = np.asarray(p, dtype=float)
    if mode == "ap":
        return ComposedInput(p.copy())
    context = np.asarray(context, dtype=float)
    if context.ndim != 2 or context.shape[0] == 0:
        raise EmptyContextError(f"mode {mode!r} needs a non-empty context")
    if context.shape[1] != p.shape[0]:
        raise DimensionMismatchError(
            f"context width {context.shape[1]} does not match phrase length {p.shape[0]}")
    if mode == "attention":
        weights = attention_weights(context, p, params)
        c_tilde = weights @ context
        return ComposedInput(np.concatenate([c_tilde, p]), weights)
    if mode == "avg":
        reduced = context.mean(axis=0)
    elif mode == "min":
        reduced = context.min(axis=0)
    else:
        reduced = context.max(axis=0)
    return ComposedInput(np.concatenate([reduced, p]))


def compose(sample, table, params, mode="attention"):
    """Compose one aspect sample into its input vector.

    ``sample`` needs ``phrase`` and ``context_tokens`` attributes. Unknown
    tokens follow the table's policy; a context emptied by skip-token
    policy raises EmptyContextError (except in ap mode, which ignores
    context).
    """
    p = table.phrase_vector(sample.phrase)
    if mode == "ap":
        return ComposedInput(p)
    context = table.context_vectors(sample.context_tokens)
    return compose_vectors(context, p, params, mode)


def compose_test_phrase(phrase, corpus, table, params, mode="attention"):
    """Compose a phrase over every sentence that mentions it.

    Contexts are the token-order concatenation of all mentioning sentences
    in corpus order, so clustering sees one vector per distinct phrase.
    """
    phrase = phrase.lower()
    occurrences = corpus.phrase_index.get(phrase)
    if not occurrences:
        raise UnknownPhraseError(f"phrase {phrase!r} does not occur in the corpus")
    seen = set()
    tokens: list[str] = []
    sids = []
    for sid, _span in occurrences:
        if sid in seen:
            continue
        seen.add(sid)
        sids.append(sid)
        tokens.extend(corpus.sentences[sid].tokens)
    from .pairs import AspectSample

    sample = AspectSample(phrase, tuple(tokens), tuple(sids))
    return compose(sample, table, params, mode)
