# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled BM25 scoring kernel.

Accumulates one query term's contribution over its postings list into a
dense per-document score array. Must stay numerically identical to the
pure-Python kernel (same operation order per element).
"""

from libc.stdint cimport int32_t


def score_postings(const int32_t[::1] doc_idx,
                   const double[::1] tfs,
                   double idf,
                   double k1_plus_1,
                   const double[::1] norm,
                   double[::1] scores):
    cdef Py_ssize_t j
    cdef Py_ssize_t n = doc_idx.shape[0]
    cdef int32_t d
    cdef double tf
    for j in range(n):
        d = doc_idx[j]
        tf = tfs[j]
        scores[d] += idf * tf * k1_plus_1 / (tf + norm[d])
