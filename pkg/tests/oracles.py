"""Independent brute-force oracles used by unit and acceptance tests.

These deliberately avoid the library's own vectorized code paths: gains are
recomputed by direct summation over every candidate, and AUC by the O(n^2)
pairwise count.
"""

import numpy as np


def oracle_split_gain(histograms, l2_reg, min_child_weight, gain_floor):
    """Best net gain over every (feature, threshold, missing-direction)
    candidate for numeric-feature histograms, or None when no candidate has
    positive net gain under the child-weight constraint."""

    def term(G, H):
        denom = H + l2_reg
        if denom <= 0.0:
            return 0.0
        return G * G / denom

    best = None
    for hist in histograms:
        g, h = hist.grad, hist.hess
        n_reg = len(g) - 1
        fG, fH = float(np.sum(g)), float(np.sum(h))
        parent = term(fG, fH)
        for t in range(n_reg - 1):
            for missing_left in (True, False):
                GL = float(np.sum(g[: t + 1]))
                HL = float(np.sum(h[: t + 1]))
                if missing_left:
                    GL += float(g[-1])
                    HL += float(h[-1])
                GR, HR = fG - GL, fH - HL
                if HL < min_child_weight or HR < min_child_weight:
                    continue
                gain = 0.5 * (term(GL, HL) + term(GR, HR) - parent) - gain_floor
                if gain > 0.0 and (best is None or gain > best):
                    best = gain
    return best


def oracle_auc(scores, labels):
    """O(n^2) pairwise AUC with ties counted one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def cross_entropy(margins, denial_labels):
    """Mean logistic loss of denial margins against binary denial labels."""
    m = np.asarray(margins, dtype=np.float64)
    d = np.asarray(denial_labels, dtype=np.float64)
    # stable log(1 + exp(x)) formulation
    return float(np.mean(np.logaddexp(0.0, m) - d * m))
