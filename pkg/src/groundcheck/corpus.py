"""Literature corpus store: ingestion, Okapi BM25 scoring, and retrieval.

The index is built once and is read-only afterwards; rebuild to update.
Retrieval semantics: candidates are ranked by score (ties broken by
ascending doc_id), the list is cut to the top k, and only then filtered
by the score threshold tau. Because scores are never negative here, a
tau of 0 admits zero-score documents when fewer than k documents match
any query term.
"""

from __future__ import annotations

import heapq
import json
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from groundcheck.errors import (
    CorpusError,
    DocumentNotFoundError,
    DuplicateDocumentError,
    IngestError,
)
from groundcheck.kernels import score_postings

INDEX_MAGIC = "groundcheck-bm25-index"
INDEX_VERSION = 1

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75

# Lowercased alphanumeric runs; internal hyphens are kept so hyphenated
# biomedical names ("il-6") survive as single terms. No stemming, no
# stopword removal.
_TOKEN_RE = re.compile(r"[^\W_]+(?:-[^\W_]+)*")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    """One literature chunk; the unit of retrieval."""

    doc_id: str
    pmid: int
    title: str
    body: str

    def validate(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not isinstance(self.pmid, int) or isinstance(self.pmid, bool) or self.pmid <= 0:
            raise ValueError(f"pmid must be a positive integer, got {self.pmid!r}")
        if not self.body:
            raise ValueError("body must be non-empty")


@dataclass(frozen=True)
class RetrievalHit:
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RetrievalConfig:
    k: int
    tau: float = 0.0
    pmid_cutoff: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.pmid_cutoff is not None and self.pmid_cutoff <= 0:
            raise ValueError("pmid_cutoff must be positive")


@dataclass(frozen=True)
class IndexStats:
    doc_count: int
    term_count: int
    mean_doc_length: float


def read_corpus_jsonl(path) -> Iterator[Document]:
    """Yield documents from a JSON-lines file with fields id/pmid/title/content."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                doc = Document(
                    doc_id=rec["id"],
                    pmid=rec["pmid"],
                    title=rec.get("title", ""),
                    body=rec["content"],
                )
                doc.validate()
            except (ValueError, KeyError, TypeError) as exc:
                raise IngestError(f"{path}: line {lineno}: {exc}") from exc
            yield doc


class Bm25Index:
    """Okapi BM25 over (id, text) pairs, postings stored as CSR arrays.

    IDF is the smoothed Robertson-Sparck-Jones form floored at zero, so
    scores are always >= 0. Repeated query tokens contribute once per
    occurrence.
    """

    def __init__(self, ids, doc_lengths, vocab, post_offsets, post_docs,
                 post_tfs, k1=DEFAULT_K1, b=DEFAULT_B, avgdl=None):
        self.ids = list(ids)
        self._id_to_idx = {d: i for i, d in enumerate(self.ids)}
        self.doc_lengths = np.asarray(doc_lengths, dtype=np.int64)
        self.vocab = vocab  # term -> term index
        self.post_offsets = np.asarray(post_offsets, dtype=np.int64)
        self.post_docs = np.asarray(post_docs, dtype=np.int32)
        self.post_tfs = np.asarray(post_tfs, dtype=np.float64)
        self.k1 = float(k1)
        self.b = float(b)
        n = len(self.ids)
        if avgdl is None:
            avgdl = float(self.doc_lengths.sum()) / n if n else 0.0
        self.avgdl = float(avgdl)
        df = np.diff(self.post_offsets).astype(np.float64)
        self.idf = np.maximum(0.0, np.log((n - df + 0.5) / (df + 0.5))) if n else df
        denom = self.avgdl if self.avgdl > 0 else 1.0
        self.norm = self.k1 * (1.0 - self.b + self.b * self.doc_lengths / denom)

    @classmethod
    def build(cls, items: Iterable[tuple[str, str]], k1=DEFAULT_K1, b=DEFAULT_B) -> "Bm25Index":
        """Build from (id, text) pairs; duplicate ids raise a conflict error."""
        ids: list[str] = []
        lengths: list[int] = []
        seen: set[str] = set()
        vocab: dict[str, int] = {}
        postings: list[list[tuple[int, int]]] = []  # term idx -> [(doc idx, tf)]
        for offset, (item_id, text) in enumerate(items):
            if item_id in seen:
                raise DuplicateDocumentError(
                    f"record {offset}: duplicate doc_id {item_id!r}")
            seen.add(item_id)
            doc_idx = len(ids)
            ids.append(item_id)
            tokens = tokenize(text)
            lengths.append(len(tokens))
            counts: dict[str, int] = {}
            for tok in tokens:
                counts[tok] = counts.get(tok, 0) + 1
            for term, tf in counts.items():
                ti = vocab.get(term)
                if ti is None:
                    ti = vocab[term] = len(vocab)
                    postings.append([])
                postings[ti].append((doc_idx, tf))

        offsets = np.zeros(len(vocab) + 1, dtype=np.int64)
        for ti, plist in enumerate(postings):
            offsets[ti + 1] = offsets[ti] + len(plist)
        post_docs = np.empty(int(offsets[-1]), dtype=np.int32)
        post_tfs = np.empty(int(offsets[-1]), dtype=np.float64)
        for ti, plist in enumerate(postings):
            # doc indices are appended in ingestion order, already ascending
            base = int(offsets[ti])
            for j, (d, tf) in enumerate(plist):
                post_docs[base + j] = d
                post_tfs[base + j] = tf
        return cls(ids, lengths, vocab, offsets, post_docs, post_tfs, k1=k1, b=b)

    @property
    def doc_count(self) -> int:
        return len(self.ids)

    @property
    def term_count(self) -> int:
        return len(self.vocab)

    @property
    def mean_doc_length(self) -> float:
        return self.avgdl

    def stats(self) -> IndexStats:
        return IndexStats(self.doc_count, self.term_count, self.avgdl)

    def _term_slice(self, term):
        ti = self.vocab.get(term)
        if ti is None:
            return None
        s, e = int(self.post_offsets[ti]), int(self.post_offsets[ti + 1])
        return ti, s, e

    def score_all(self, tokens: list[str]) -> np.ndarray:
        """Dense score array over all documents for a tokenized query."""
        scores = np.zeros(self.doc_count, dtype=np.float64)
        k1_plus_1 = self.k1 + 1.0
        for tok in tokens:
            hit = self._term_slice(tok)
            if hit is None:
                continue
            ti, s, e = hit
            score_postings(self.post_docs[s:e], self.post_tfs[s:e],
                           float(self.idf[ti]), k1_plus_1, self.norm, scores)
        return scores

    def score_tokens(self, tokens: list[str], item_id: str) -> float:
        """BM25 score of one document; 0.0 when no query term occurs in it."""
        idx = self._id_to_idx.get(item_id)
        if idx is None:
            raise DocumentNotFoundError(f"unknown doc_id {item_id!r}")
        score = 0.0
        for tok in tokens:
            hit = self._term_slice(tok)
            if hit is None:
                continue
            ti, s, e = hit
            pos = int(np.searchsorted(self.post_docs[s:e], idx))
            if pos < e - s and self.post_docs[s + pos] == idx:
                tf = float(self.post_tfs[s + pos])
                # same expression as the kernel, so the two paths agree exactly
                score += float(self.idf[ti]) * tf * (self.k1 + 1.0) / (tf + float(self.norm[idx]))
        return score

    def search_tokens(self, tokens: list[str], k: int, tau: float = 0.0,
                      eligible: np.ndarray | None = None) -> list[tuple[str, float]]:
        """Top-k (id, score) pairs: rank by (-score, id), cut to k, filter by tau.

        An empty token list returns no hits. ``eligible`` is an optional
        boolean mask restricting the candidate documents.
        """
        if not tokens or not self.doc_count:
            return []
        scores = self.score_all(tokens)
        if eligible is not None:
            positive_idx = np.nonzero((scores > 0.0) & eligible)[0]
        else:
            positive_idx = np.nonzero(scores > 0.0)[0]
        ranked = sorted(((self.ids[i], float(scores[i])) for i in positive_idx),
                        key=lambda t: (-t[1], t[0]))
        top = ranked[:k]
        if tau <= 0.0 and len(top) < k:
            # zero-score documents still clear a zero threshold; fill the
            # remaining slots with the smallest eligible ids not yet ranked
            need = k - len(top)
            taken = {d for d, _ in top}
            zero_ids = (self.ids[i] for i in range(self.doc_count)
                        if (eligible is None or eligible[i]) and self.ids[i] not in taken)
            top.extend((d, 0.0) for d in heapq.nsmallest(need, zero_ids))
        return [(d, s) for d, s in top if s >= tau]


class CorpusIndex:
    """BM25-searchable corpus with PMID provenance filtering and persistence."""

    def __init__(self, documents: list[Document], bm25: Bm25Index):
        self.documents = documents
        self._by_id = {d.doc_id: d for d in documents}
        self.bm25 = bm25
        self.pmids = np.array([d.pmid for d in documents], dtype=np.int64)

    @classmethod
    def build(cls, docs: Iterable[Document], k1=DEFAULT_K1, b=DEFAULT_B) -> "CorpusIndex":
        documents = []

        def checked():
            for offset, doc in enumerate(docs):
                try:
                    doc.validate()
                except ValueError as exc:
                    raise IngestError(f"record {offset}: {exc}") from exc
                documents.append(doc)
                yield doc.doc_id, f"{doc.title}\n{doc.body}"

        bm25 = Bm25Index.build(checked(), k1=k1, b=b)
        return cls(documents, bm25)

    def stats(self) -> IndexStats:
        return self.bm25.stats()

    def document(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise DocumentNotFoundError(f"unknown doc_id {doc_id!r}") from None

    def bm25_score(self, query_terms: list[str], doc_id: str) -> float:
        return self.bm25.score_tokens(query_terms, doc_id)

    def retrieve(self, query: str, config: RetrievalConfig) -> list[RetrievalHit]:
        tokens = tokenize(query)
        eligible = None
        if config.pmid_cutoff is not None:
            eligible = self.pmids <= config.pmid_cutoff
        pairs = self.bm25.search_tokens(tokens, config.k, config.tau, eligible)
        return [RetrievalHit(doc_id, score, rank)
                for rank, (doc_id, score) in enumerate(pairs, start=1)]

    def save(self, directory, extra_meta: dict | None = None):
        """Persist to a directory; format is internal and versioned."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        header = {
            "magic": INDEX_MAGIC,
            "version": INDEX_VERSION,
            "k1": self.bm25.k1,
            "b": self.bm25.b,
            "doc_count": self.bm25.doc_count,
            "term_count": self.bm25.term_count,
            "mean_doc_length": self.bm25.avgdl,
        }
        if extra_meta:
            header["meta"] = extra_meta
        (directory / "header.json").write_text(
            json.dumps(header, sort_keys=True, indent=2), encoding="utf-8")
        terms = [""] * self.bm25.term_count
        for term, ti in self.bm25.vocab.items():
            terms[ti] = term
        (directory / "vocab.json").write_text(
            json.dumps(terms, ensure_ascii=False), encoding="utf-8")
        np.savez(directory / "arrays.npz",
                 doc_lengths=self.bm25.doc_lengths,
                 post_offsets=self.bm25.post_offsets,
                 post_docs=self.bm25.post_docs,
                 post_tfs=self.bm25.post_tfs,
                 pmids=self.pmids)
        with open(directory / "documents.jsonl", "w", encoding="utf-8") as fh:
            for doc in self.documents:
                fh.write(json.dumps({"id": doc.doc_id, "pmid": doc.pmid,
                                     "title": doc.title, "content": doc.body},
                                    ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, directory) -> "CorpusIndex":
        directory = Path(directory)
        header_path = directory / "header.json"
        if not header_path.exists():
            raise CorpusError(f"{directory}: not an index directory (no header)")
        header = json.loads(header_path.read_text(encoding="utf-8"))
        if header.get("magic") != INDEX_MAGIC:
            raise CorpusError(f"{directory}: bad magic {header.get('magic')!r}")
        if header.get("version") != INDEX_VERSION:
            raise CorpusError(f"{directory}: unsupported index version "
                              f"{header.get('version')!r}")
        terms = json.loads((directory / "vocab.json").read_text(encoding="utf-8"))
        vocab = {t: i for i, t in enumerate(terms)}
        arrays = np.load(directory / "arrays.npz")
        documents = list(read_corpus_jsonl(directory / "documents.jsonl"))
        bm25 = Bm25Index(
            [d.doc_id for d in documents],
            arrays["doc_lengths"], vocab, arrays["post_offsets"],
            arrays["post_docs"], arrays["post_tfs"],
            k1=header["k1"], b=header["b"],
            avgdl=header["mean_doc_length"],
        )
        return cls(documents, bm25)
