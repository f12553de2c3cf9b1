"""Independent reference implementations used as test oracles.

These are deliberately naive (plain loops, dictionaries, closed forms) and
share no code with the package.
"""
import itertools
import math
from collections import Counter
from fractions import Fraction


def equal_width_labels(x, bins):
    lo, hi = min(x), max(x)
    width = (hi - lo) / bins
    labels = []
    for v in x:
        k = 0
        while k < bins - 1 and v >= lo + (k + 1) * width:
            k += 1
        labels.append(k)
    return labels


def mi_bruteforce(x, y, bins):
    """Plug-in MI in bits from an explicit joint histogram."""
    if max(x) == min(x) or max(y) == min(y):
        return 0.0
    lx, ly = equal_width_labels(x, bins), equal_width_labels(y, bins)
    n = len(x)
    joint = Counter(zip(lx, ly))
    px, py = Counter(lx), Counter(ly)
    total = 0.0
    for (a, b), c in joint.items():
        p = c / n
        total += p * math.log2(p / ((px[a] / n) * (py[b] / n)))
    return total


def entropy_bits(labels):
    n = len(labels)
    return -sum((c / n) * math.log2(c / n) for c in Counter(labels).values())


def u_pairwise(a, b):
    """U of ``a``: pairs with a > b plus half the ties."""
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def mwu_exhaustive(a, b):
    """Exact two-sided p by re-labelling the pooled sample in every possible way."""
    pooled = list(a) + list(b)
    n, m = len(a), len(b)
    mid = Fraction(n * m, 2)
    u_obs = Fraction(u_pairwise(a, b)).limit_denominator(2)
    dev = abs(u_obs - mid)
    hits = total = 0
    for chosen in itertools.combinations(range(n + m), n):
        s = set(chosen)
        aa = [pooled[k] for k in chosen]
        bb = [pooled[k] for k in range(n + m) if k not in s]
        u = Fraction(u_pairwise(aa, bb)).limit_denominator(2)
        hits += abs(u - mid) >= dev
        total += 1
    return float(u_obs), hits / total


def kalman_update(mean, cov, H, R, y):
    """Closed-form linear-Gaussian posterior (numpy arrays in, arrays out)."""
    import numpy as np

    S = H @ cov @ H.T + R
    K = cov @ H.T @ np.linalg.inv(S)
    post_mean = mean + K @ (y - H @ mean)
    post_cov = (np.eye(len(mean)) - K @ H) @ cov
    return post_mean, post_cov
