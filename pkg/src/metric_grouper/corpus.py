"""Corpus and word-vector I/O.

File formats:
  word vectors: UTF-8 text, one entry per line, ``token f1 f2 ... fd``.
  corpus: UTF-8 text, one JSON object per line with fields ``tokens``
    (array of strings) and ``mentions`` (array of
    ``{"phrase": str, "start": int, "end": int, "group": int?}``).

All tokens and phrases are lowercased on load and lookups lowercase their
argument, so text comparison is case-insensitive throughout. Loaded
structures are immutable after construction and safe to share across
threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllUnknownError,
    DimensionMismatchError,
    EmptyError,
    EmptyPhraseError,
    FormatError,
)

ZERO_VECTOR = "zero-vector"
SKIP_TOKEN = "skip-token"
UNKNOWN_POLICIES = (ZERO_VECTOR, SKIP_TOKEN)


class WordVectorTable:
    """Token -> fixed-length vector lookup.

    ``unknown_policy`` controls what happens for out-of-vocabulary tokens:
    ``zero-vector`` substitutes a zero vector (context lengths are
    preserved), ``skip-token`` drops the token.
    """

    def __init__(self, dimension, vectors, unknown_policy=ZERO_VECTOR, duplicate_count=0):
        if unknown_policy not in UNKNOWN_POLICIES:
            raise ValueError(f"unknown_policy must be one of {UNKNOWN_POLICIES}")
        self.dimension = int(dimension)
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        self.unknown_policy = unknown_policy
        self.duplicate_count = duplicate_count
        self.vectors: dict[str, np.ndarray] = {}
        for token, vec in vectors.items():
            key = token.lower()
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (self.dimension,):
                raise DimensionMismatchError(
                    f"vector for {token!r} has length {arr.shape}, expected {self.dimension}")
            if not np.all(np.isfinite(arr)):
                raise FormatError(f"vector for {token!r} has non-finite components")
            if key in self.vectors:
                raise ValueError(f"duplicate token {key!r}")
            arr.flags.writeable = False
            self.vectors[key] = arr

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, token):
        return token.lower() in self.vectors

    def get(self, token):
        """Vector for ``token`` or None when absent (policy not applied)."""
        return self.vectors.get(token.lower())

    def zeros(self):
        return np.zeros(self.dimension)

    def context_vectors(self, tokens):
        """Stack vectors for a token sequence, shape (n, d).

        Under zero-vector policy every token produces a row; under
        skip-token policy unknown tokens are dropped and the result may
        have fewer rows than tokens (possibly zero).
        """
        rows = []
        for tok in tokens:
            vec = self.get(tok)
            if vec is None:
                if self.unknown_policy == ZERO_VECTOR:
                    rows.append(self.zeros())
            else:
                rows.append(vec)
        if not rows:
            return np.zeros((0, self.dimension))
        return np.array(rows)

    def context_items(self, tokens):
        """Like context_vectors but also returns the tokens kept per row."""
        rows, kept = [], []
        for tok in tokens:
            vec = self.get(tok)
            if vec is None:
                if self.unknown_policy == ZERO_VECTOR:
                    rows.append(self.zeros())
                    kept.append(tok.lower())
            else:
                rows.append(vec)
                kept.append(tok.lower())
        if not rows:
            return np.zeros((0, self.dimension)), kept
        return np.array(rows), kept

    def phrase_vector(self, phrase):
        """Arithmetic mean of the constituent token vectors.

        Unknown tokens contribute zero vectors (zero-vector policy) or are
        skipped (skip-token policy).
        """
        tokens = phrase.split()
        if not tokens:
            raise EmptyPhraseError("phrase has no tokens")
        vecs = []
        for tok in tokens:
            vec = self.get(tok)
            if vec is None:
                if self.unknown_policy == ZERO_VECTOR:
                    vecs.append(self.zeros())
            else:
                vecs.append(vec)
        if not vecs:
            raise AllUnknownError(f"every token of {phrase!r} is out of vocabulary")
        return np.mean(vecs, axis=0)

    def coverage(self, tokens):
        """(known, total) over the distinct lowercased tokens given."""
        distinct = {t.lower() for t in tokens}
        known = sum(1 for t in distinct if t in self.vectors)
        return known, len(distinct)


def load_word_vectors(path, unknown_policy=ZERO_VECTOR, errors=None):
    """Parse a word-vector text file into a WordVectorTable.

    The first non-empty line fixes the dimension; later lines with a
    different arity are format errors. When ``errors`` is a list, problems
    are appended as ``"line N: message"`` strings and bad lines are
    skipped instead of raising.
    """
    entries: dict[str, np.ndarray] = {}
    dimension = None
    duplicates = 0

    def fail(lineno, message):
        if errors is None:
            raise FormatError(f"{path}: line {lineno}: {message}")
        errors.append(f"line {lineno}: {message}")

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            token = parts[0].lower()
            if dimension is None:
                if len(parts) < 2:
                    fail(lineno, "entry has no vector components")
                    continue
                dimension = len(parts) - 1
            if len(parts) - 1 != dimension:
                fail(lineno, f"inconsistent dimension: got {len(parts) - 1}, expected {dimension}")
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                fail(lineno, "non-numeric vector component")
                continue
            if not np.all(np.isfinite(vec)):
                fail(lineno, "non-finite vector component")
                continue
            if token in entries:
                duplicates += 1  # first occurrence wins after lowercasing
                continue
            entries[token] = vec

    if not entries:
        if errors is None:
            raise EmptyError(f"{path}: no word vectors loaded")
        errors.append("no word vectors loaded")
        return None
    return WordVectorTable(dimension, entries, unknown_policy, duplicate_count=duplicates)


@dataclass(frozen=True)
class Mention:
    """One marked aspect-phrase occurrence inside a sentence."""
    phrase: str
    start: int
    end: int
    group: int | None = None

    @property
    def span(self):
        return (self.start, self.end)


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[str, ...]
    mentions: tuple[Mention, ...]


class AnnotatedCorpus:
    """Sentences with marked aspect-phrase occurrences.

    ``phrase_index`` maps each phrase to its occurrences as
    ``[(sentence_id, (start, end)), ...]`` in corpus order and is always
    the exact inverse of the sentence mentions.
    """

    def __init__(self, sentences):
        self.sentences: list[AnnotatedSentence] = list(sentences)
        self.phrase_index: dict[str, list[tuple[int, tuple[int, int]]]] = {}
        for sid, sent in enumerate(self.sentences):
            for m in sent.mentions:
                self.phrase_index.setdefault(m.phrase, []).append((sid, m.span))

    def __len__(self):
        return len(self.sentences)

    def mention_count(self):
        return sum(len(s.mentions) for s in self.sentences)

    def phrases(self):
        """Distinct phrases in sorted order."""
        return sorted(self.phrase_index)

    def distinct_tokens(self):
        out = set()
        for sent in self.sentences:
            out.update(sent.tokens)
        return out

    def has_labels(self):
        return any(m.group is not None for s in self.sentences for m in s.mentions)

    def gold_groups(self):
        """Phrase -> gold group id, by majority over labeled mentions.

        Ties break toward the smallest group id; phrases with no labeled
        mention are omitted.
        """
        votes: dict[str, dict[int, int]] = {}
        for sent in self.sentences:
            for m in sent.mentions:
                if m.group is not None:
                    votes.setdefault(m.phrase, {}).setdefault(m.group, 0)
                    votes[m.phrase][m.group] += 1
        out = {}
        for phrase, counts in votes.items():
            best = min(counts, key=lambda g: (-counts[g], g))
            out[phrase] = best
        return out


def _parse_sentence(obj, lineno):
    if not isinstance(obj, dict):
        raise FormatError(f"line {lineno}: record is not a JSON object")
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) for t in tokens):
        raise FormatError(f"line {lineno}: 'tokens' must be a non-empty array of strings")
    tokens = tuple(t.lower() for t in tokens)
    raw_mentions = obj.get("mentions", [])
    if not isinstance(raw_mentions, list):
        raise FormatError(f"line {lineno}: 'mentions' must be an array")
    mentions = []
    seen = set()
    for m in raw_mentions:
        if not isinstance(m, dict):
            raise FormatError(f"line {lineno}: mention is not a JSON object")
        phrase = m.get("phrase")
        start, end = m.get("start"), m.get("end")
        group = m.get("group")
        if not isinstance(phrase, str) or not isinstance(start, int) or not isinstance(end, int):
            raise FormatError(f"line {lineno}: mention needs string 'phrase' and integer 'start'/'end'")
        if group is not None and not isinstance(group, int):
            raise FormatError(f"line {lineno}: 'group' must be an integer when present")
        if not (0 <= start < end <= len(tokens)):
            raise FormatError(
                f"line {lineno}: span [{start},{end}) out of range for {len(tokens)} tokens")
        phrase = phrase.lower()
        if phrase != " ".join(tokens[start:end]):
            raise FormatError(
                f"line {lineno}: phrase {phrase!r} does not match tokens {tokens[start:end]!r}")
        key = (phrase, start, end)
        if key in seen:
            raise FormatError(f"line {lineno}: duplicate mention {key!r}")
        seen.add(key)
        mentions.append(Mention(phrase, start, end, group))
    return AnnotatedSentence(tokens, tuple(mentions))


def load_corpus(path, errors=None):
    """Load a line-delimited JSON corpus.

    When ``errors`` is a list, malformed records are collected as strings
    and skipped; otherwise the first problem raises FormatError.
    """
    sentences = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                if errors is None:
                    raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
                errors.append(f"line {lineno}: invalid JSON ({exc.msg})")
                continue
            try:
                sentences.append(_parse_sentence(obj, lineno))
            except FormatError as exc:
                if errors is None:
                    raise FormatError(f"{path}: {exc}") from exc
                errors.append(str(exc))
    return AnnotatedCorpus(sentences)


def corpus_records(corpus):
    """Corpus as serializable dicts, one per sentence."""
    records = []
    for sent in corpus.sentences:
        mentions = []
        for m in sent.mentions:
            entry = {"phrase": m.phrase, "start": m.start, "end": m.end}
            if m.group is not None:
                entry["group"] = m.group
            mentions.append(entry)
        records.append({"tokens": list(sent.tokens), "mentions": mentions})
    return records


def save_corpus(corpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        for record in corpus_records(corpus):
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def save_word_vectors(table, path):
    """Write a table back to the text format, tokens sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for token in sorted(table.vectors):
            comps = " ".join(repr(float(x)) for x in table.vectors[token])
            fh.write(f"{token} {comps}\n")
