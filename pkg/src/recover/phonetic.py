"""Metaphone consonant-skeleton encoding (Philips' original rule set).

Only the primary code is produced and it is never truncated; callers decide how
much of the prefix to compare.  Vowels are kept only in first position, so
near-homophones such as ``cytiva``/``sitiva`` (``STF``) or ``kilo``/``killo``
(``KL``) collide.
"""

from __future__ import annotations

from functools import lru_cache

VOWELS = frozenset("AEIOU")
_FRONT = frozenset("EIY")
_SOFTENS_H = frozenset("CGPST")
_SAME = {"F": "F", "J": "J", "L": "L", "M": "M", "N": "N", "R": "R", "Q": "K", "V": "F", "Z": "S"}


@lru_cache(maxsize=65536)
def phonetic_key(word: str) -> str:
    w = "".join(c for c in word.upper() if "A" <= c <= "Z")
    if not w:
        return ""

    out: list[str] = []
    n = 0
    if w[:2] in ("AE", "GN", "KN", "PN", "WR"):
        out.append(w[1])
        n = 2
    elif w[0] == "X":
        out.append("S")
        n = 1
    elif w[:2] == "WH":
        out.append("W")
        n = 2

    size = len(w)

    def at(i: int) -> str:
        return w[i] if 0 <= i < size else ""

    while n < size:
        c = w[n]
        prev, nxt, after = at(n - 1), at(n + 1), at(n + 2)
        step = 1
        if c == prev and c != "C":
            n += 1
            continue

        if c in VOWELS:
            if n == 0:
                out.append(c)
        elif c == "B":
            if not (prev == "M" and n == size - 1):
                out.append("B")
        elif c == "C":
            if prev == "S" and nxt in _FRONT:
                pass
            elif nxt == "I" and after == "A":
                out.append("X")
            elif nxt in _FRONT:
                out.append("S")
            elif nxt == "H":
                if prev == "S" or (n == 0 and after and after not in VOWELS):
                    out.append("K")
                else:
                    out.append("X")
                step = 2
            else:
                out.append("K")
        elif c == "D":
            if nxt == "G" and after in _FRONT:
                out.append("J")
                step = 3
            else:
                out.append("T")
        elif c == "G":
            if nxt == "H" and after and after not in VOWELS:
                pass  # night, daughter
            elif nxt == "N" and (n + 2 == size or w[n + 1 :] == "NED"):
                pass  # sign, signed
            elif nxt in _FRONT and prev != "G":
                out.append("J")
            else:
                out.append("K")
        elif c == "H":
            if prev not in _SOFTENS_H and nxt in VOWELS:
                out.append("H")
        elif c == "K":
            if prev != "C":
                out.append("K")
        elif c == "P":
            if nxt == "H":
                out.append("F")
                step = 2
            else:
                out.append("P")
        elif c == "S":
            if nxt == "H":
                out.append("X")
                step = 2
            elif nxt == "I" and after in ("O", "A"):
                out.append("X")
            else:
                out.append("S")
        elif c == "T":
            if nxt == "I" and after in ("O", "A"):
                out.append("X")
            elif nxt == "H":
                out.append("0")
                step = 2
            elif not (nxt == "C" and after == "H"):
                out.append("T")
        elif c == "W":
            if nxt in VOWELS:
                out.append("W")
        elif c == "X":
            out.append("KS")
        elif c == "Y":
            if nxt in VOWELS:
                out.append("Y")
        else:
            out.append(_SAME[c])
        n += step
    return "".join(out)


def shared_prefix_hit(a: str, b: str, prefix_len: int = 5, min_len: int = 3) -> bool:
    """True when two keys agree on their first ``min(prefix_len, shorter)`` chars.

    Keys shorter than ``min_len`` never match.
    """
    need = min(prefix_len, len(a), len(b))
    return need >= min_len and a[:need] == b[:need]


class PhoneticIndex:
    """Set of keys supporting ``any(shared_prefix_hit(k, key) for key in keys)`` lookups."""

    def __init__(self, keys, prefix_len: int = 5, min_len: int = 3):
        self.prefix_len = prefix_len
        self.min_len = min_len
        self._prefixes: dict[int, set[str]] = {}
        self._exact: dict[int, set[str]] = {}
        for k in set(keys):
            if len(k) < min_len:
                continue
            for size in range(min_len, prefix_len + 1):
                if len(k) >= size:
                    self._prefixes.setdefault(size, set()).add(k[:size])
            if len(k) < prefix_len:
                self._exact.setdefault(len(k), set()).add(k)

    def hit(self, key: str) -> bool:
        cap = min(self.prefix_len, len(key))
        if cap < self.min_len:
            return False
        if key[:cap] in self._prefixes.get(cap, ()):
            return True
        # pool keys shorter than ``cap`` bound the comparison length themselves
        return any(key[:size] in self._exact.get(size, ()) for size in range(self.min_len, cap))
