"""Brute-force reference implementations used as test oracles."""
from fractions import Fraction


def exhaustive_best_split(X, y, rows, n_features, n_classes, min_leaf=1):
    """Enumerate every (feature, threshold) pair; exact rational scores.

    Returns ``(feature, lower_value, upper_value, score)`` or ``None``.
    Features and thresholds are scanned in ascending order and only a strictly
    better score replaces the incumbent, which encodes the tie rule.
    """
    labels = {y[i] for i in rows}
    if len(labels) <= 1:
        return None
    best = None
    for f in range(n_features):
        values = sorted({X[i][f] for i in rows})
        for lo, hi in zip(values, values[1:]):
            left = [i for i in rows if X[i][f] <= lo]
            right = [i for i in rows if X[i][f] > lo]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            score = Fraction(0)
            for part in (left, right):
                counts = [0] * n_classes
                for i in part:
                    counts[y[i]] += 1
                score += Fraction(sum(c * c for c in counts), len(part))
            if best is None or score > best[3]:
                best = (f, lo, hi, score)
    return best


def exhaustive_tree_predict(X, y, n_classes, queries):
    """Grow a full CART tree by exhaustive search and predict ``queries``."""

    def grow(rows):
        split = exhaustive_best_split(X, y, rows, len(X[0]), n_classes)
        if split is None or len(rows) < 2:
            counts = [0] * n_classes
            for i in rows:
                counts[y[i]] += 1
            top = max(counts)
            return ("leaf", counts.index(top))
        f, lo, _, _ = split
        return (
            "node",
            f,
            lo,
            grow([i for i in rows if X[i][f] <= lo]),
            grow([i for i in rows if X[i][f] > lo]),
        )

    tree = grow(list(range(len(X))))

    def walk(node, q):
        while node[0] == "node":
            _, f, lo, left, right = node
            node = left if q[f] <= lo else right
        return node[1]

    return [walk(tree, q) for q in queries]
