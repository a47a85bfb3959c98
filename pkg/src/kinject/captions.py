"""Caption generation at three knowledge granularities.

Coarse captions name the present diseases; medium captions add each
disease's typical phenotypes; fine captions additionally append a single
aggregated absence clause ("No evidence of X or Y") covering the union of
the present diseases' excluded phenotypes. Phenotypes that land in that
absence union are suppressed from the typical clauses so each excluded
phenotype is mentioned exactly once per fine caption.
"""

import json
from dataclasses import dataclass, replace
from enum import IntEnum
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import EmptyLabelsError
from .seeding import hash64


class Granularity(IntEnum):
    COARSE = 0
    MEDIUM = 1
    FINE = 2

    @classmethod
    def from_string(cls, s):
        return cls[s.upper()]

    def __str__(self):
        return self.name.lower()


SOURCE_TEMPLATE = "template"
SOURCE_EXTERNAL = "external"


def paraphrased_source(model_tag):
    return f"paraphrased:{model_tag}"


@dataclass(frozen=True)
class CaptionRecord:
    image_id: str
    labels: tuple  # disease ids, KB order
    granularity: Granularity
    text: str
    source: str = SOURCE_TEMPLATE


# Surface variants, picked by seed. Every absence opener starts with a
# negation cue ("no"/"without") so the tokenizer's scoping always triggers.
_OUTER_TEMPLATES = ["{clauses}", "{clauses} noted", "Findings of {clauses}"]
_CONNECTORS = [" with ", " showing ", " accompanied by "]
_ABSENCE_OPENERS = [". No evidence of ", ". No ", ". Without "]

DEFAULT_TEMPLATE_SEED = 0


def _join_names(names, last_sep):
    if len(names) == 1:
        return names[0]
    return ", ".join(names[:-1]) + last_sep + names[-1]


def render_caption(kb, labels, granularity, seed=DEFAULT_TEMPLATE_SEED, phenotype_dropout=0.0):
    """Render one caption; pure function of its arguments."""
    if not labels:
        raise EmptyLabelsError("caption requires at least one disease label")
    labels = set(labels)
    diseases = [kb.disease_by_id(d) for d in kb.disease_ids() if d in labels]
    missing = labels - {d.id for d in diseases}
    if missing:
        kb.disease_by_id(sorted(missing)[0])  # raises UnknownDiseaseError

    variant = seed % len(_OUTER_TEMPLATES)
    rng = np.random.default_rng(hash64(seed, "dropout")) if phenotype_dropout > 0 else None

    exc_union = []
    if granularity == Granularity.FINE:
        for d in diseases:
            for pid in d.excluded:
                if pid not in exc_union:
                    exc_union.append(pid)

    clauses = []
    for d in diseases:
        if granularity == Granularity.COARSE:
            clauses.append(d.display_name)
            continue
        typ = [pid for pid in d.typical if pid not in exc_union]
        if rng is not None:
            typ = [pid for pid in typ if rng.random() >= phenotype_dropout]
        if not typ:
            clauses.append(d.display_name)
            continue
        names = [kb.phenotype_by_id(pid).display_name for pid in typ]
        clauses.append(d.display_name + _CONNECTORS[variant] + _join_names(names, " and "))

    text = _OUTER_TEMPLATES[variant].format(clauses="; ".join(clauses))
    if granularity == Granularity.FINE and exc_union:
        names = [kb.phenotype_by_id(pid).display_name for pid in exc_union]
        # Disease-rich studies always get the verbose opener; simpler
        # ones vary with the surface template.
        opener = 0 if len(diseases) >= 3 else variant
        text += _ABSENCE_OPENERS[opener] + _join_names(names, " or ")
    return text


def generate_corpus(kb, dataset, granularity, seed, phenotype_dropout=0.0):
    """One CaptionRecord per (image_id, labels) pair, in input order.

    Each record gets its own derived seed, so generation is independent of
    iteration order.
    """
    records = []
    for image_id, labels in dataset:
        rec_seed = hash64(seed, image_id)
        text = render_caption(kb, labels, granularity, rec_seed, phenotype_dropout)
        ordered = tuple(d for d in kb.disease_ids() if d in set(labels))
        records.append(
            CaptionRecord(
                image_id=str(image_id),
                labels=ordered,
                granularity=granularity,
                text=text,
            )
        )
    return records


def apply_paraphrase(corpus, client, max_workers=4):
    """Rewrite every record's text through a paraphrase client.

    Failed records keep their template text; returns (new_corpus, n_failed).
    Output order always equals input order.
    """

    def one(record):
        try:
            result = client.paraphrase(record.text, hash64(0, record.image_id))
        except Exception:
            return record, True
        return (
            replace(record, text=result.text, source=paraphrased_source(result.model_tag)),
            False,
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        outcomes = list(pool.map(one, corpus))
    new_corpus = [rec for rec, _ in outcomes]
    failures = sum(1 for _, failed in outcomes if failed)
    return new_corpus, failures


def write_corpus(path, corpus):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in corpus:
            fh.write(
                json.dumps(
                    {
                        "image_id": rec.image_id,
                        "labels": list(rec.labels),
                        "granularity": str(rec.granularity),
                        "text": rec.text,
                        "source": rec.source,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_corpus(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(
                CaptionRecord(
                    image_id=obj["image_id"],
                    labels=tuple(obj["labels"]),
                    granularity=Granularity.from_string(obj["granularity"]),
                    text=obj["text"],
                    source=obj["source"],
                )
            )
    return records
