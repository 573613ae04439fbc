"""Pathology names, the default 18-class taxonomy and tri-state label values."""

from __future__ import annotations

import enum
import json
import math
import re
from typing import Iterable, Iterator

from .errors import DuplicatePathology, EmptyName

ACRONYMS = frozenset({"ILD"})

_WORD = re.compile(r"[A-Za-z]+")


def _case_word(match: re.Match) -> str:
    word = match.group(0)
    if word.upper() in ACRONYMS:
        return word.upper()
    return word.capitalize()


class Pathology(str):
    """A canonical pathology name.

    Constructing one normalizes the raw text, so ``Pathology("pleural_thickening")``
    and ``Pathology("Pleural Thickening")`` compare (and hash) equal.
    """

    def __new__(cls, raw: str) -> "Pathology":
        if isinstance(raw, Pathology):
            return raw
        text = " ".join(str(raw).replace("_", " ").split())
        if not text:
            raise EmptyName(f"pathology name is empty: {raw!r}")
        return super().__new__(cls, _WORD.sub(_case_word, text))


def normalize_name(raw: str) -> Pathology:
    return Pathology(raw)


class TriState(enum.Enum):
    """Label state for one (sample, pathology) cell.

    The numeric encoding used in label matrices is 1.0, 0.0 and NaN.
    """

    ABSENT = 0
    PRESENT = 1
    UNKNOWN = -1

    @property
    def numeric(self) -> float:
        return math.nan if self is TriState.UNKNOWN else float(self.value)

    @classmethod
    def from_numeric(cls, value: float) -> "TriState":
        if value is None or is_unknown(value):
            return cls.UNKNOWN
        if value == 1:
            return cls.PRESENT
        if value == 0:
            return cls.ABSENT
        raise ValueError(f"not a tri-state value: {value!r}")


def is_unknown(value) -> bool:
    """True for the Unknown state, whether given as NaN, None or TriState.UNKNOWN."""
    if value is None or value is TriState.UNKNOWN:
        return True
    try:
        return math.isnan(value)
    except TypeError:
        return False


class Taxonomy:
    """An ordered, duplicate-free list of pathologies."""

    __slots__ = ("_names",)

    def __init__(self, names: Iterable[str]):
        canon = tuple(Pathology(n) for n in names)
        seen = set()
        for name in canon:
            if name in seen:
                raise DuplicatePathology(f"duplicate pathology {name!r}")
            seen.add(name)
        self._names = canon

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self) -> Iterator[Pathology]:
        return iter(self._names)

    def __getitem__(self, i: int) -> Pathology:
        return self._names[i]

    def __contains__(self, name: object) -> bool:
        try:
            return Pathology(name) in self._names
        except EmptyName:
            return False

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Taxonomy):
            return self._names == other._names
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._names)

    def __repr__(self) -> str:
        return f"Taxonomy({list(self._names)!r})"

    @property
    def names(self) -> tuple[Pathology, ...]:
        return self._names

    def index(self, name: str) -> int:
        return self._names.index(Pathology(name))

    def to_json(self) -> str:
        return json.dumps([str(n) for n in self._names])

    @classmethod
    def from_json(cls, text: str) -> "Taxonomy":
        data = json.loads(text)
        if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
            raise ValueError("taxonomy JSON must be an array of strings")
        return cls(data)


DEFAULT_PATHOLOGIES = (
    "Atelectasis",
    "Consolidation",
    "Infiltration",
    "Pneumothorax",
    "Edema",
    "Emphysema",
    "Fibrosis",
    "Effusion",
    "Pneumonia",
    "Pleural Thickening",
    "Cardiomegaly",
    "Nodule",
    "Mass",
    "Hernia",
    "Lung Lesion",
    "Fracture",
    "Lung Opacity",
    "Enlarged Cardiomediastinum",
)


def default_taxonomy() -> Taxonomy:
    return Taxonomy(DEFAULT_PATHOLOGIES)
