"""NumPy implementations of the numeric kernels.

This is the fallback backend used when the compiled extension is missing;
`attnsent.kernels` picks between the two at import time. Signatures and
semantics must stay in lockstep with `_ckernels.pyx`.
"""

import numpy as np


def softmax(scores):
    """Softmax of a 1-d score vector, max-shifted for stability."""
    scores = np.asarray(scores, dtype=np.float64)
    e = np.exp(scores - scores.max())
    return e / e.sum()


def dot(a, b):
    return float(np.dot(a, b))


def cosine(a, b):
    """Cosine similarity; 0.0 when either vector has zero norm."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def weighted_rowsum(matrix, ids, weights, scale):
    """scale * sum_t weights[t] * matrix[ids[t]]."""
    return scale * (weights[:, None] * matrix[ids]).sum(axis=0)


def pair_dots(a_matrix, a_ids, b_matrix, b_ids):
    """Per-position dot products a_matrix[a_ids[t]] . b_matrix[b_ids[t]]."""
    return np.einsum("ij,ij->i", a_matrix[a_ids], b_matrix[b_ids])


def scatter_add_rows(out, ids, coefs, vec):
    """out[ids[t]] += coefs[t] * vec, accumulating over duplicate ids."""
    np.add.at(out, ids, coefs[:, None] * vec[None, :])


def scatter_add_gathered(out, out_ids, coefs, src_matrix, src_ids):
    """out[out_ids[t]] += coefs[t] * src_matrix[src_ids[t]]."""
    np.add.at(out, out_ids, coefs[:, None] * src_matrix[src_ids])
