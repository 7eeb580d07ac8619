"""Independent oracles shared across test modules.

Everything here is written from the definitions (loops, explicit sums,
dense algebra), deliberately avoiding the package's own vectorized code
paths so tests compare two independent routes to the same value.
"""

import numpy as np


def finite_difference_grad(f, x, h=1e-6):
    """Central-difference gradient of scalar f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = g.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = f(x)
        flat_x[i] = orig - h
        fm = f(x)
        flat_x[i] = orig
        flat_g[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b):
    """Scale-normalized worst-case deviation between two tensors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / denom)


def brute_average_precision(ranked_relevance, n_relevant_total):
    """AP from the definition: mean precision at each hit, over all relevant."""
    hits = 0
    total = 0.0
    for i, rel in enumerate(ranked_relevance, start=1):
        if rel:
            hits += 1
            total += hits / i
    return total / n_relevant_total


def brute_precision_at_k(ranked_relevance, k=10):
    return sum(1 for r in ranked_relevance[:k] if r) / k


def brute_wmf_objective(R_dense, U, V, reg, alpha):
    """Term-by-term objective over a dense count matrix (0 = unobserved)."""
    total = 0.0
    n_users, n_songs = R_dense.shape
    for u in range(n_users):
        for i in range(n_songs):
            r = R_dense[u, i]
            p = 1.0 if r > 0 else 0.0
            c = 1.0 + alpha * r if r > 0 else 1.0
            s = float(U[u] @ V[i])
            total += c * (p - s) ** 2
    total += reg * (float(np.sum(U * U)) + float(np.sum(V * V)))
    return total


def dense_row_solve(fixed, obs_indices, confidences, preferences, reg):
    """Materialized-confidence least squares: (F^T C F + reg I) x = F^T C p."""
    n, k = fixed.shape
    c_full = np.ones(n)
    p_full = np.zeros(n)
    for j, c, p in zip(obs_indices, confidences, preferences):
        c_full[j] = c
        p_full[j] = p
    C = np.diag(c_full)
    A = fixed.T @ C @ fixed + reg * np.eye(k)
    b = fixed.T @ C @ p_full
    return np.linalg.solve(A, b)


def pairwise_auc(scores, observed_mask):
    """Fraction of (observed, unobserved) pairs ranked correctly, by counting."""
    pos = scores[observed_mask]
    neg = scores[~observed_mask]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def total_variation(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return 0.5 * float(np.abs(p - q).sum())
