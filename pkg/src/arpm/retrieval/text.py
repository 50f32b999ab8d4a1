from __future__ import annotations

import re

# Word runs of letters/digits/underscore, excluding CJK ideographs, or runs of CJK ideographs.
_CJK = "㐀-䶿一-鿿豈-﫿"
_TOKEN = re.compile(rf"[{_CJK}]+|[^\W{_CJK}]+", re.UNICODE)
_CJK_RUN = re.compile(rf"^[{_CJK}]+$")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation.

    A contiguous CJK run emits each character plus its character bigrams,
    since CJK text carries no word delimiters.
    """
    out: list[str] = []
    for tok in _TOKEN.findall(text.lower()):
        if _CJK_RUN.match(tok):
            out.extend(tok)
            out.extend(tok[i : i + 2] for i in range(len(tok) - 1))
        else:
            out.append(tok)
    return out
