"""Porter stemmer, following the original 1980 rule set.

Only the usual departure of the reference C implementation is kept: words of
one or two letters are returned untouched. Tokens that are not plain ASCII
letters (punctuation, numbers, accented words) are also returned unchanged.

>>> stem("ponies")
'poni'
>>> stem("bounds")
'bound'
"""

from functools import lru_cache

_VOWELS = frozenset("aeiou")


def _is_consonant(word, i):
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem):
    """Number of VC sequences in ``stem`` ([C](VC)^m[V])."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        vowel = not _is_consonant(stem, i)
        if prev_vowel and not vowel:
            m += 1
        prev_vowel = vowel
    return m


def _has_vowel(stem):
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word):
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word):
    if len(word) < 3:
        return False
    return (
        _is_consonant(word, len(word) - 3)
        and not _is_consonant(word, len(word) - 2)
        and _is_consonant(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


def _apply(word, rules, condition):
    """Apply the rule with the longest matching suffix, if its condition holds.

    Once the longest suffix matches, shorter rules are never tried, even
    when the condition fails.
    """
    for suffix, replacement in rules:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if condition(stem):
                return stem + replacement, True
            return word, False
    return word, False


def _m_gt0(stem):
    return _measure(stem) > 0


def _m_gt1(stem):
    return _measure(stem) > 1


# Rule lists are ordered so that longer suffixes sharing an ending come first.
_STEP2 = sorted(
    [
        ("ational", "ate"), ("tional", "tion"), ("enci", "ence"),
        ("anci", "ance"), ("izer", "ize"), ("abli", "able"), ("alli", "al"),
        ("entli", "ent"), ("eli", "e"), ("ousli", "ous"),
        ("ization", "ize"), ("ation", "ate"), ("ator", "ate"),
        ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
        ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"),
        ("biliti", "ble"),
    ],
    key=lambda r: -len(r[0]),
)

_STEP3 = sorted(
    [
        ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
        ("ical", "ic"), ("ful", ""), ("ness", ""),
    ],
    key=lambda r: -len(r[0]),
)

_STEP4 = sorted(
    [
        ("al", ""), ("ance", ""), ("ence", ""), ("er", ""), ("ic", ""),
        ("able", ""), ("ible", ""), ("ant", ""), ("ement", ""), ("ment", ""),
        ("ent", ""), ("ion", ""), ("ou", ""), ("ism", ""), ("ate", ""),
        ("iti", ""), ("ous", ""), ("ive", ""), ("ize", ""),
    ],
    key=lambda r: -len(r[0]),
)


def _step1a(word):
    for suffix, replacement in (("sses", "ss"), ("ies", "i"), ("ss", "ss"), ("s", "")):
        if word.endswith(suffix):
            return word[: len(word) - len(suffix)] + replacement
    return word


def _step1b(word):
    if word.endswith("eed"):
        stem = word[:-3]
        return stem + "ee" if _m_gt0(stem) else word
    for suffix in ("ed", "ing"):
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if not _has_vowel(stem):
                return word
            return _step1b_cleanup(stem)
    return word


def _step1b_cleanup(word):
    if word.endswith(("at", "bl", "iz")):
        return word + "e"
    if _ends_double_consonant(word) and word[-1] not in "lsz":
        return word[:-1]
    if _measure(word) == 1 and _ends_cvc(word):
        return word + "e"
    return word


def _step1c(word):
    if word.endswith("y") and _has_vowel(word[:-1]):
        return word[:-1] + "i"
    return word


def _step4(word):
    for suffix, _ in _STEP4:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if suffix == "ion":
                ok = _m_gt1(stem) and stem[-1:] in ("s", "t")
            else:
                ok = _m_gt1(stem)
            return stem if ok else word
    return word


def _step5(word):
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            word = stem
    if word.endswith("ll") and _measure(word) > 1:
        word = word[:-1]
    return word


def _is_stemmable(word):
    return word.isascii() and word.isalpha() and word.islower()


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    """Return the Porter stem of a lowercase token."""
    if len(word) <= 2 or not _is_stemmable(word):
        return word
    word = _step1a(word)
    word = _step1b(word)
    word = _step1c(word)
    word, _ = _apply(word, _STEP2, _m_gt0)
    word, _ = _apply(word, _STEP3, _m_gt0)
    word = _step4(word)
    word = _step5(word)
    return word


def stem_phrase(phrase_tokens) -> str:
    """Stem each token of a phrase and join them with single spaces."""
    return " ".join(stem(t) for t in phrase_tokens)
