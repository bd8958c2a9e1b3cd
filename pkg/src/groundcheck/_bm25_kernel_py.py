"""Pure-Python (numpy) BM25 scoring kernel.

Fallback for environments where the compiled extension is unavailable.
Per-element arithmetic matches the compiled kernel exactly: within one
postings list every document index is unique, so the fancy-indexed
in-place add below performs the same IEEE operations in the same order.
"""


def score_postings(doc_idx, tfs, idf, k1_plus_1, norm, scores):
    scores[doc_idx] += idf * tfs * k1_plus_1 / (tfs + norm[doc_idx])
