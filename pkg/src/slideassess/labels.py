"""Canonical region label set.

Every classifier in this package predicts over the same eight region
classes.  The tuple below is the single source of truth for both the label
names and their order; ties in ranked predictions are broken by ascending
index in this tuple.
"""

from __future__ import annotations

from .errors import UnknownLabelError

LABELS: tuple[str, ...] = (
    "Crystalized",
    "Damaged",
    "Dense",
    "Dirt",
    "Edge",
    "Empty",
    "EpiOnly",
    "LeukOnly",
)

N_LABELS = len(LABELS)

LABEL_INDEX: dict[str, int] = {name: i for i, name in enumerate(LABELS)}


def label_index(name: str) -> int:
    """Return the canonical index of a label, raising on unknown names."""
    try:
        return LABEL_INDEX[name]
    except KeyError:
        raise UnknownLabelError(f"unknown label {name!r}; expected one of {', '.join(LABELS)}") from None
