"""Final-answer extraction and exact-match grading.

The answer is the content of the last ``\\boxed{...}`` span in the response.
Both sides are canonicalized before comparison: surrounding ``$`` and
whitespace are dropped, numeric forms (``\\frac{a}{b}``, ``a/b``, finite
decimals, integers with thousands separators) become exact rationals, and
word or single-letter answers are case-folded. There is no numeric
tolerance: ``0.3333`` does not match ``1/3``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Union


class GradeReason(str, enum.Enum):
    MATCHED = "matched"
    MISMATCH = "mismatch"
    NO_BOXED_ANSWER = "no_boxed_answer"
    EXTRACTION_ERROR = "extraction_error"


@dataclass(frozen=True)
class GradeResult:
    extracted: Optional[str]
    correct: bool
    reason: GradeReason


Grader = Callable[[str, str], GradeResult]


class _Unbalanced(Exception):
    pass


_BOXED = re.compile(r"\\(?:boxed|fbox)\s*\{")


def extract_last_boxed(text: str) -> Optional[str]:
    """Content of the last ``\\boxed{}`` with balanced braces, or ``None``.

    Raises ``_Unbalanced`` when boxes exist but the last one never closes.
    """
    starts = [m.end() for m in _BOXED.finditer(text)]
    if not starts:
        return None
    start = starts[-1]
    depth = 1
    for i in range(start, len(text)):
        c = text[i]
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return text[start:i]
    raise _Unbalanced(text[start - 7 : start + 40])


_FRAC = re.compile(r"^\\[dt]?frac\{([^{}]+)\}\{([^{}]+)\}$")
_FRAC_SHORT = re.compile(r"^\\[dt]?frac(\d)(\d)$")
_THOUSANDS = re.compile(r"^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$")
_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")
_SLASH = re.compile(r"^[+-]?\d+\s*/\s*[+-]?\d+$")
_TEXT_WRAP = re.compile(r"^\\(?:text|textbf|mathrm|mbox)\{(.*)\}$")
_WORD = re.compile(r"^[A-Za-z]+$")


def _as_rational(s: str) -> Optional[Fraction]:
    sign = 1
    body = s
    if body.startswith("-"):
        sign, body = -1, body[1:]
    elif body.startswith("+"):
        body = body[1:]
    m = _FRAC.match(body) or _FRAC_SHORT.match(body)
    if m:
        num, den = _as_rational(m.group(1)), _as_rational(m.group(2))
        if num is None or den is None or den == 0:
            return None
        return sign * num / den
    if _THOUSANDS.match(body):
        body = body.replace(",", "")
    if _DECIMAL.match(body):
        return sign * Fraction(body)
    if _SLASH.match(body):
        num, den = (x.strip() for x in body.split("/"))
        if int(den) == 0:
            return None
        return sign * Fraction(int(num), int(den))
    return None


def canonicalize(answer: str) -> Union[Fraction, str]:
    s = answer.strip().replace("$", "")
    s = re.sub(r"\\[!,;: ]", "", s)
    s = s.replace("\\left", "").replace("\\right", "")
    s = re.sub(r"\s+", "", s)
    m = _TEXT_WRAP.match(s)
    if m:
        s = m.group(1).strip()
    value = _as_rational(s)
    if value is not None:
        return value
    if _WORD.match(s):
        return s.casefold()
    return s


def grade_response(response_text: str, gold: str) -> GradeResult:
    try:
        extracted = extract_last_boxed(response_text)
    except _Unbalanced:
        return GradeResult(None, False, GradeReason.EXTRACTION_ERROR)
    if extracted is None:
        return GradeResult(None, False, GradeReason.NO_BOXED_ANSWER)
    extracted = extracted.strip()
    if canonicalize(extracted) == canonicalize(gold):
        return GradeResult(extracted, True, GradeReason.MATCHED)
    return GradeResult(extracted, False, GradeReason.MISMATCH)
