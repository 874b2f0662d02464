"""Extraction of the numeric decision from free-form model output."""

from __future__ import annotations

import math
import re

MARKER = "###"

_CURRENCY = re.compile(r"[$€£¥₹₩]|\b(?:USD|EUR|GBP|dollars?)\b", re.IGNORECASE)
_NUMBER = re.compile(
    r"(?<![0-9.])([-+]?)\s*((?:[0-9]{1,3}(?:,[0-9]{3})+|[0-9]+)(?:\.[0-9]+)?|\.[0-9]+)"
)


def parse_decision(raw_text: object) -> float | None:
    """Return the first number after the final ``###`` marker, or None.

    Currency symbols and thousands separators are stripped. Anything before
    the last marker is ignored, so intermediate numbers from reasoning text never
    leak into the decision. Never raises.
    """
    if not isinstance(raw_text, str):
        try:
            raw_text = str(raw_text)
        except Exception:
            return None
    idx = raw_text.rfind(MARKER)
    if idx < 0:
        return None
    tail = _CURRENCY.sub("", raw_text[idx + len(MARKER) :])
    m = _NUMBER.search(tail)
    if m is None:
        return None
    sign, digits = m.group(1), m.group(2).replace(",", "")
    try:
        value = float(digits)
    except ValueError:
        return None
    if not math.isfinite(value):
        return None
    return -value if sign == "-" else value
