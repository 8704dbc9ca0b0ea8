"""Gestalt pattern matching (Ratcliff-Obershelp string similarity).

The similarity of two strings is ``2 * M / (len(a) + len(b))`` where ``M``
is the number of characters covered by recursively anchoring on the longest
common substring: among all maximal common substrings the one starting
earliest in ``a`` (and, for equal starts, earliest in ``b``) is chosen as
the anchor, and the regions to its left and right are then matched
independently by the same rule.

Two empty strings are defined to have similarity 1.
"""

from __future__ import annotations


def _longest_common_block(a, alo, ahi, b, blo, bhi):
    """Leftmost-longest common substring of a[alo:ahi] and b[blo:bhi].

    Returns (i, j, size): among the maximal-length common substrings the
    one with the smallest start i in a, then smallest start j in b.
    """
    positions: dict[str, list[int]] = {}
    for j in range(blo, bhi):
        positions.setdefault(b[j], []).append(j)

    best_i, best_j, best_size = alo, blo, 0
    # lengths of common substrings ending at (i - 1, j - 1)
    prev: dict[int, int] = {}
    for i in range(alo, ahi):
        current: dict[int, int] = {}
        for j in positions.get(a[i], ()):
            size = prev.get(j - 1, 0) + 1
            current[j] = size
            # Strict '>' keeps the first maximal block found.  Scanning i
            # ascending (and j ascending within a row) makes that the
            # leftmost-longest one.
            if size > best_size:
                best_i, best_j, best_size = i - size + 1, j - size + 1, size
        prev = current
    return best_i, best_j, best_size


def gestalt_similarity(a: str, b: str) -> float:
    """Ratcliff-Obershelp similarity ratio of two strings, in [0, 1]."""
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    matches = 0
    pending = [(0, len(a), 0, len(b))]
    while pending:
        alo, ahi, blo, bhi = pending.pop()
        if alo >= ahi or blo >= bhi:
            continue
        i, j, size = _longest_common_block(a, alo, ahi, b, blo, bhi)
        if size == 0:
            continue
        matches += size
        pending.append((alo, i, blo, j))
        pending.append((i + size, ahi, j + size, bhi))
    return 2.0 * matches / total
