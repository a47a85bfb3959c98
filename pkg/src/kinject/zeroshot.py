"""Zero-shot evaluation: prompt pairs, cosine argmax prediction, per-class
accuracy, and a from-scratch paired t-test with an embedded critical-value
table."""

import math
from dataclasses import dataclass

import numpy as np

from .captions import DEFAULT_TEMPLATE_SEED, Granularity, render_caption
from .encoder import encode_image, encode_text
from .errors import (
    ConfigError,
    EmptyCandidatesError,
    LengthMismatchError,
    ZeroVarianceError,
)
from .textproc import encode_ids, tokenize

# Report column abbreviations for the shipped 11-class knowledge base.
ABBREVIATIONS = {
    "atelectasis": "A",
    "cardiomegaly": "CM",
    "consolidation": "C",
    "edema": "E",
    "enlarged_cardiomediastinum": "ECM",
    "lung_lesion": "LL",
    "lung_opacity": "LO",
    "pleural_effusion": "PE",
    "pleural_other": "PO",
    "pneumonia": "P",
    "pneumothorax": "PTX",
}


def abbreviation(disease_id):
    if disease_id in ABBREVIATIONS:
        return ABBREVIATIONS[disease_id]
    return "".join(part[0] for part in disease_id.split("_")).upper()


@dataclass(frozen=True)
class PromptPair:
    presence_text: str
    absence_text: str


@dataclass(frozen=True)
class PromptSet:
    pairs: dict  # disease_id -> PromptPair
    granularity: Granularity


@dataclass(frozen=True)
class Prediction:
    disease_id: str
    predicted_present: bool
    similarity_present: float
    similarity_absent: float


@dataclass(frozen=True)
class AccuracyReport:
    per_class_accuracy: dict  # disease_id -> fraction
    average: float
    n_examples: int


def build_prompt_pairs(kb, granularity):
    """One presence/absence text pair per disease, deterministic."""
    pairs = {}
    for did in kb.disease_ids():
        d = kb.disease_by_id(did)
        presence = render_caption(kb, {did}, granularity, DEFAULT_TEMPLATE_SEED)
        absence = f"No evidence of {d.display_name}"
        if granularity == Granularity.FINE:
            absence += ", other findings may be present"
        pairs[did] = PromptPair(presence_text=presence, absence_text=absence)
    return PromptSet(pairs=pairs, granularity=granularity)


def predict_label(image_embedding, candidates):
    """Index of the candidate text embedding with the highest cosine
    similarity; ties break toward the smallest index."""
    if len(candidates) == 0:
        raise EmptyCandidatesError("need at least one candidate embedding")
    sims = np.asarray(candidates) @ np.asarray(image_embedding)
    return int(np.argmax(sims))


def _embed_text(params, vocab, text):
    return encode_text(params, encode_ids(vocab, tokenize(text)))


def evaluate(params, dataset, prompts, vocab):
    """Per-class and average zero-shot accuracy over a labeled dataset.

    Each disease is binarized: the image embedding is compared against the
    (absence, presence) pair; ties resolve to absent.
    """
    if not dataset:
        raise ConfigError("evaluation dataset must be nonempty")
    disease_ids = list(prompts.pairs.keys())
    # candidate order (absent, present): argmax tie-break then lands on absent
    cand = {}
    for did in disease_ids:
        pair = prompts.pairs[did]
        cand[did] = np.stack(
            [_embed_text(params, vocab, pair.absence_text), _embed_text(params, vocab, pair.presence_text)]
        )

    correct = {did: 0 for did in disease_ids}
    for ex in dataset:
        img = encode_image(params, ex.features)
        for k, did in enumerate(disease_ids):
            predicted_present = predict_label(img, cand[did]) == 1
            if predicted_present == bool(ex.labels[k]):
                correct[did] += 1

    per_class = {did: correct[did] / len(dataset) for did in disease_ids}
    return AccuracyReport(
        per_class_accuracy=per_class,
        average=float(np.mean(list(per_class.values()))),
        n_examples=len(dataset),
    )


def predictions_for_example(params, example, prompts, vocab):
    """Full per-disease Prediction records for one example (diagnostics)."""
    img = encode_image(params, example.features)
    out = []
    for did, pair in prompts.pairs.items():
        sp = float(_embed_text(params, vocab, pair.presence_text) @ img)
        sa = float(_embed_text(params, vocab, pair.absence_text) @ img)
        out.append(
            Prediction(
                disease_id=did,
                predicted_present=sp > sa,
                similarity_present=sp,
                similarity_absent=sa,
            )
        )
    return out


def paired_t_test(a, b):
    """t statistic and degrees of freedom for paired samples (sample sd,
    n-1 denominator)."""
    if len(a) != len(b):
        raise LengthMismatchError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise ConfigError("paired t-test requires n >= 2")
    d = [x - y for x, y in zip(a, b)]
    mean = sum(d) / n
    var = sum((x - mean) ** 2 for x in d) / (n - 1)
    if var == 0.0:
        raise ZeroVarianceError("differences have zero variance")
    t = mean / math.sqrt(var / n)
    return t, n - 1


# Two-tailed Student-t critical values, df 1..30.
T_CRITICAL = {
    0.05: {
        1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365,
        8: 2.306, 9: 2.262, 10: 2.228, 11: 2.201, 12: 2.179, 13: 2.160,
        14: 2.145, 15: 2.131, 16: 2.120, 17: 2.110, 18: 2.101, 19: 2.093,
        20: 2.086, 21: 2.080, 22: 2.074, 23: 2.069, 24: 2.064, 25: 2.060,
        26: 2.056, 27: 2.052, 28: 2.048, 29: 2.045, 30: 2.042,
    },
    0.01: {
        1: 63.657, 2: 9.925, 3: 5.841, 4: 4.604, 5: 4.032, 6: 3.707, 7: 3.499,
        8: 3.355, 9: 3.250, 10: 3.169, 11: 3.106, 12: 3.055, 13: 3.012,
        14: 2.977, 15: 2.947, 16: 2.921, 17: 2.898, 18: 2.878, 19: 2.861,
        20: 2.845, 21: 2.831, 22: 2.819, 23: 2.807, 24: 2.797, 25: 2.787,
        26: 2.779, 27: 2.771, 28: 2.763, 29: 2.756, 30: 2.750,
    },
}


def is_significant(t, df, alpha=0.05):
    table = T_CRITICAL[alpha]
    if df not in table:
        raise ConfigError(f"no critical value tabulated for df={df}")
    return abs(t) > table[df]


def report_to_csv_rows(report, disease_order):
    """(header, row) for an AccuracyReport, Table-II-shaped columns."""
    header = [abbreviation(d) for d in disease_order] + ["Avg"]
    row = [report.per_class_accuracy[d] for d in disease_order] + [report.average]
    return header, row


def report_to_markdown(report, disease_order):
    header, row = report_to_csv_rows(report, disease_order)
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
        "| " + " | ".join(f"{v:.3f}" for v in row) + " |",
    ]
    return "\n".join(lines) + "\n"
