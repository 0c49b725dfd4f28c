"""Information-content similarity over a concept taxonomy.

The taxonomy is a rooted DAG of concepts with nonnegative frequency
counts. A concept's propagated count is the sum of raw counts over the
concept itself and everything below it, counting each concept once, so
propagated counts never decrease toward the root. Information content of
a concept is the negative natural log of its propagated probability.

Similarity between two phrases is the maximum, over all concept pairs the
phrases map to, of 1 / (IC(c1) + IC(c2) - 2 * IC(lcs(c1, c2))), capped for
identical or synonymous concepts whose denominator vanishes.

Taxonomy file: UTF-8 line-delimited JSON with two record kinds,
``{"concept": id, "parents": [ids], "count": number}`` and
``{"word": token, "concepts": [ids]}``. Exactly one concept must have an
empty parent list (the root).
"""
from __future__ import annotations

import json
import math
from collections import deque

from .errors import (
    FormatError,
    UnknownConceptError,
    UnknownWordError,
    ZeroProbabilityError,
)

JCN_CAP = 1e6
JCN_EPS = 1e-12


class Taxonomy:
    """Immutable concept DAG with counts and a word -> concepts map."""

    def __init__(self, parents, counts, word_map):
        self.parents = {str(c): frozenset(str(p) for p in ps) for c, ps in parents.items()}
        self.concepts = frozenset(self.parents)
        for c, ps in self.parents.items():
            for p in ps:
                if p not in self.concepts:
                    raise FormatError(f"concept {c!r} names unknown parent {p!r}")
            if c in ps:
                raise FormatError(f"concept {c!r} is its own parent")
        self.counts = {str(c): float(v) for c, v in counts.items()}
        for c in self.concepts:
            self.counts.setdefault(c, 0.0)
        for c, v in self.counts.items():
            if c not in self.concepts:
                raise FormatError(f"count given for unknown concept {c!r}")
            if not (v >= 0.0) or not math.isfinite(v):
                raise FormatError(f"concept {c!r} has invalid count {v!r}")

        roots = sorted(c for c, ps in self.parents.items() if not ps)
        if len(roots) != 1:
            raise FormatError(f"expected exactly one root concept, found {len(roots)}")
        self.root = roots[0]

        self.children: dict[str, set[str]] = {c: set() for c in self.concepts}
        for c, ps in self.parents.items():
            for p in ps:
                self.children[p].add(c)

        order = self._topological_order()
        self._ancestors: dict[str, frozenset[str]] = {}
        for c in order:
            acc = {c}
            for p in self.parents[c]:
                acc.update(self._ancestors[p])
            self._ancestors[c] = frozenset(acc)

        self.propagated = {c: 0.0 for c in self.concepts}
        for c in sorted(self.concepts):
            raw = self.counts[c]
            if raw:
                for a in self._ancestors[c]:
                    self.propagated[a] += raw
        self.total = self.propagated[self.root]
        if self.total <= 0:
            raise FormatError("total propagated count at the root must be positive")

        self.word_map: dict[str, frozenset[str]] = {}
        for word, cs in word_map.items():
            cs = frozenset(str(c) for c in cs)
            for c in cs:
                if c not in self.concepts:
                    raise FormatError(f"word {word!r} maps to unknown concept {c!r}")
            key = word.lower()
            self.word_map[key] = self.word_map.get(key, frozenset()) | cs

    def _topological_order(self):
        """Concepts ordered so every parent precedes its children."""
        indegree = {c: len(ps) for c, ps in self.parents.items()}
        queue = deque(sorted(c for c, d in indegree.items() if d == 0))
        order = []
        while queue:
            c = queue.popleft()
            order.append(c)
            for child in sorted(self.children[c]):
                indegree[child] -= 1
                if indegree[child] == 0:
                    queue.append(child)
        if len(order) != len(self.concepts):
            stuck = sorted(set(self.concepts) - set(order))
            raise FormatError(f"parent graph has a cycle involving {stuck[0]!r}")
        return order

    def ancestors(self, concept):
        """All ancestors of ``concept``, including itself."""
        concept = str(concept)
        if concept not in self.concepts:
            raise UnknownConceptError(f"unknown concept {concept!r}")
        return self._ancestors[concept]

    def phrase_concepts(self, phrase):
        """Concepts for a phrase via its head token (the last token).

        Falls back to any constituent token with a usable mapping. Only
        concepts with positive propagated count qualify.
        """
        tokens = phrase.lower().split()
        if not tokens:
            raise UnknownWordError("empty phrase")
        for tok in [tokens[-1]] + tokens[:-1]:
            usable = frozenset(
                c for c in self.word_map.get(tok, ()) if self.propagated[c] > 0)
            if usable:
                return usable
        raise UnknownWordError(f"no concept mapping for {phrase!r}")


def information_content(concept, tax):
    """-ln(propagated_count / total); zero at the root."""
    concept = str(concept)
    if concept not in tax.concepts:
        raise UnknownConceptError(f"unknown concept {concept!r}")
    p = tax.propagated[concept]
    if p <= 0:
        raise ZeroProbabilityError(f"concept {concept!r} has zero propagated count")
    return -math.log(p / tax.total) + 0.0


def lcs(c1, c2, tax):
    """Common ancestor with maximal information content.

    Ties break toward the smallest concept id. Zero-count concepts are
    skipped; the root always qualifies, so a result always exists.
    """
    common = tax.ancestors(c1) & tax.ancestors(c2)
    candidates = [c for c in common if tax.propagated[c] > 0]
    return min(candidates, key=lambda c: (-information_content(c, tax), c))


def jcn_similarity(w1, w2, tax, cap=JCN_CAP, eps=JCN_EPS):
    """Lexicon similarity of two phrases, maximized over concept pairs.

    Denominators at or below ``eps`` (identical or synonym concepts) give
    the cap value; results are clamped to it.
    """
    cs1 = tax.phrase_concepts(w1)
    cs2 = tax.phrase_concepts(w2)
    best = 0.0
    for c1 in sorted(cs1):
        ic1 = information_content(c1, tax)
        for c2 in sorted(cs2):
            ic2 = information_content(c2, tax)
            denom = ic1 + ic2 - 2.0 * information_content(lcs(c1, c2, tax), tax)
            sim = cap if denom <= eps else min(cap, 1.0 / denom)
            if sim > best:
                best = sim
    return best


def incompatible(p1, p2, tax, eta):
    """True when the lexicon similarity falls below ``eta``.

    Phrases without a concept mapping are never incompatible: missing
    knowledge must not fabricate negatives.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    try:
        return jcn_similarity(p1, p2, tax) < eta
    except UnknownWordError:
        return False


def build_taxonomy(records):
    """Assemble a Taxonomy from parsed record dicts (both kinds mixed)."""
    parents, counts, word_map = {}, {}, {}
    for rec in records:
        if "concept" in rec:
            cid = str(rec["concept"])
            if cid in parents:
                raise FormatError(f"duplicate concept record {cid!r}")
            parents[cid] = rec.get("parents", [])
            counts[cid] = rec.get("count", 0.0)
        elif "word" in rec:
            word = str(rec["word"]).lower()
            word_map[word] = set(word_map.get(word, set())) | set(rec.get("concepts", []))
        else:
            raise FormatError("record is neither a concept nor a word entry")
    return Taxonomy(parents, counts, word_map)


def load_taxonomy(path, errors=None):
    """Load a line-delimited JSON taxonomy file.

    With an ``errors`` list, per-line and graph-level problems are
    collected (graph problems carry no line number) and None is returned
    when the taxonomy cannot be built.
    """
    records = []
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
            if not isinstance(obj, dict) or not ("concept" in obj or "word" in obj):
                if errors is None:
                    raise FormatError(f"{path}: line {lineno}: record is neither concept nor word")
                errors.append(f"line {lineno}: record is neither concept nor word")
                continue
            records.append(obj)
    try:
        return build_taxonomy(records)
    except FormatError as exc:
        if errors is None:
            raise FormatError(f"{path}: {exc}") from exc
        errors.append(str(exc))
        return None


def taxonomy_records(tax):
    """Taxonomy as serializable dicts (concept records then word records)."""
    records = []
    for c in sorted(tax.concepts):
        records.append({
            "concept": c,
            "parents": sorted(tax.parents[c]),
            "count": tax.counts[c],
        })
    for word in sorted(tax.word_map):
        records.append({"word": word, "concepts": sorted(tax.word_map[word])})
    return records


def save_taxonomy(tax, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in taxonomy_records(tax):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
