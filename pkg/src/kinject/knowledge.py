"""Disease/phenotype knowledge base: types, JSON loading, validation.

A knowledge base holds a phenotype table plus an ordered disease list.
Each disease carries a set of typical phenotypes (expected present when
the disease is present) and a set of excluded phenotypes (characteristic
absences). Disease order in the source file is significant: it defines
the class index used everywhere downstream.
"""

import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import FormatError, UnknownDiseaseError, ValidationError

_ID_RE = re.compile(r"^[a-z0-9_]+$")

DEFAULT_KB_RESOURCE = "default_kb.json"


@dataclass(frozen=True)
class Phenotype:
    id: str
    display_name: str


@dataclass(frozen=True)
class DiseaseEntry:
    id: str
    display_name: str
    typical: tuple  # phenotype ids, declaration order
    excluded: tuple  # phenotype ids, declaration order


@dataclass(frozen=True)
class KnowledgeBase:
    phenotypes: tuple = field(default_factory=tuple)
    diseases: tuple = field(default_factory=tuple)

    def phenotype_by_id(self, pid):
        for p in self.phenotypes:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def disease_by_id(self, did):
        for d in self.diseases:
            if d.id == did:
                return d
        raise UnknownDiseaseError(did)

    def disease_ids(self):
        return [d.id for d in self.diseases]

    def class_index(self, did):
        for i, d in enumerate(self.diseases):
            if d.id == did:
                return i
        raise UnknownDiseaseError(did)


_PHENOTYPE_KEYS = {"id", "display_name"}
_DISEASE_KEYS = {"id", "display_name", "typical", "excluded"}
_TOP_KEYS = {"phenotypes", "diseases"}


def parse_knowledge_doc(doc):
    """Build and validate a KnowledgeBase from an already-decoded JSON dict."""
    if not isinstance(doc, dict):
        raise FormatError("knowledge document must be a JSON object")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise FormatError(f"unknown top-level keys: {sorted(extra)}")
    phenotypes = []
    for i, raw in enumerate(doc.get("phenotypes", [])):
        if not isinstance(raw, dict) or set(raw) != _PHENOTYPE_KEYS:
            raise FormatError(f"phenotypes[{i}]: expected keys {sorted(_PHENOTYPE_KEYS)}")
        phenotypes.append(Phenotype(id=raw["id"], display_name=raw["display_name"]))
    diseases = []
    for i, raw in enumerate(doc.get("diseases", [])):
        if not isinstance(raw, dict) or set(raw) != _DISEASE_KEYS:
            raise FormatError(f"diseases[{i}]: expected keys {sorted(_DISEASE_KEYS)}")
        diseases.append(
            DiseaseEntry(
                id=raw["id"],
                display_name=raw["display_name"],
                typical=tuple(raw["typical"]),
                excluded=tuple(raw["excluded"]),
            )
        )
    kb = KnowledgeBase(phenotypes=tuple(phenotypes), diseases=tuple(diseases))
    validate_knowledge(kb)
    return kb


def parse_knowledge_file(path):
    """Load a knowledge JSON file, validate it, and return the KnowledgeBase."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return parse_knowledge_doc(doc)


def default_knowledge_base():
    """The shipped 11-class knowledge base."""
    text = resources.files("kinject.data").joinpath(DEFAULT_KB_RESOURCE).read_text("utf-8")
    return parse_knowledge_doc(json.loads(text))


def validate_knowledge(kb):
    """Check all knowledge-base invariants; raise ValidationError on the first hit."""
    seen = set()
    for p in kb.phenotypes:
        if not p.id or not _ID_RE.match(p.id):
            raise ValidationError("bad_id", f"bad phenotype id: {p.id!r}")
        if p.id in seen:
            raise ValidationError("duplicate_id", f"duplicate phenotype id: {p.id!r}")
        seen.add(p.id)
    phen_ids = seen
    seen = set()
    for d in kb.diseases:
        if not d.id or not _ID_RE.match(d.id):
            raise ValidationError("bad_id", f"bad disease id: {d.id!r}")
        if d.id in seen:
            raise ValidationError("duplicate_id", f"duplicate disease id: {d.id!r}")
        seen.add(d.id)
        if not d.typical:
            raise ValidationError("empty_typical", f"disease {d.id!r} has no typical phenotypes")
        for pid in d.typical + d.excluded:
            if pid not in phen_ids:
                raise ValidationError(
                    "dangling_ref", f"disease {d.id!r} references unknown phenotype {pid!r}"
                )
        overlap = set(d.typical) & set(d.excluded)
        if overlap:
            raise ValidationError(
                "typ_exc_overlap",
                f"disease {d.id!r}: phenotype(s) {sorted(overlap)} both typical and excluded",
            )


def typical_phenotypes(kb, disease_id):
    """Typical phenotypes of a disease, in declaration order."""
    d = kb.disease_by_id(disease_id)
    return [kb.phenotype_by_id(pid) for pid in d.typical]


def excluded_phenotypes(kb, disease_id):
    """Excluded phenotypes of a disease, in declaration order."""
    d = kb.disease_by_id(disease_id)
    return [kb.phenotype_by_id(pid) for pid in d.excluded]


def serialize_knowledge(kb):
    """Inverse of parse_knowledge_doc (up to key order)."""
    return {
        "phenotypes": [{"id": p.id, "display_name": p.display_name} for p in kb.phenotypes],
        "diseases": [
            {
                "id": d.id,
                "display_name": d.display_name,
                "typical": list(d.typical),
                "excluded": list(d.excluded),
            }
            for d in kb.diseases
        ],
    }
