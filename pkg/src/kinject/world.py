"""Synthetic multi-label world: diseases cause phenotypes, phenotypes cause
image features.

Each phenotype owns a fixed unit signature vector; signatures are pairwise
orthogonal (rows of a seeded random orthonormal basis). An example's
feature vector is the sum of the signatures of its present phenotypes plus
Gaussian noise. Excluded phenotypes of present diseases are forced absent,
which is the only channel through which excluded-phenotype knowledge can
pay off downstream.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateWorldError
from .knowledge import default_knowledge_base
from .seeding import hash64

_RESAMPLE_CAP = 1000


@dataclass
class WorldConfig:
    kb: object = None
    feature_dim: int = 64
    noise_sigma: float = 0.1
    disease_prevalence: float = 0.15
    p_typ_given_disease: float = 0.9
    p_phen_background: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kb is None:
            self.kb = default_knowledge_base()
        for p in (self.disease_prevalence, self.p_typ_given_disease, self.p_phen_background):
            if not 0.0 <= p <= 1.0:
                raise ConfigError("probabilities must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.feature_dim < len(self.kb.phenotypes):
            raise ConfigError("feature_dim must be >= number of phenotypes")


@dataclass(frozen=True)
class LabeledExample:
    image_id: str
    features: np.ndarray
    labels: tuple  # 0/1 per KB disease, KB order
    phenotypes_present: frozenset

    def present_disease_ids(self, kb):
        return [d for d, bit in zip(kb.disease_ids(), self.labels) if bit]


@dataclass(frozen=True)
class World:
    cfg: WorldConfig
    signatures: np.ndarray  # n_phenotypes x feature_dim, orthonormal rows
    phenotype_ids: tuple

    def signature_of(self, pid):
        return self.signatures[self.phenotype_ids.index(pid)]


def make_world(cfg: WorldConfig):
    """Fix one orthonormal signature per phenotype, deterministically in seed."""
    n_phen = len(cfg.kb.phenotypes)
    if cfg.feature_dim < n_phen:
        raise ConfigError("feature_dim must be >= number of phenotypes")
    rng = np.random.default_rng(cfg.seed)
    gauss = rng.normal(size=(cfg.feature_dim, cfg.feature_dim))
    q, r = np.linalg.qr(gauss)
    # fix QR sign ambiguity so the basis is a pure function of the seed
    q = q * np.sign(np.diag(r))
    signatures = q.T[:n_phen]
    return World(
        cfg=cfg,
        signatures=signatures,
        phenotype_ids=tuple(p.id for p in cfg.kb.phenotypes),
    )


def _sample_one(world, rng):
    cfg = world.cfg
    kb = cfg.kb
    present_diseases = [
        d for d in kb.diseases if rng.random() < cfg.disease_prevalence
    ]
    if not present_diseases:
        return None
    forced_absent = set()
    for d in present_diseases:
        forced_absent.update(d.excluded)
    typical_union = set()
    for d in present_diseases:
        typical_union.update(d.typical)

    phenotypes = set()
    for pid in world.phenotype_ids:
        if pid in forced_absent:
            continue
        p = cfg.p_typ_given_disease if pid in typical_union else cfg.p_phen_background
        if rng.random() < p:
            phenotypes.add(pid)

    features = np.zeros(cfg.feature_dim)
    for pid in phenotypes:
        features = features + world.signature_of(pid)
    if cfg.noise_sigma > 0:
        features = features + rng.normal(scale=cfg.noise_sigma, size=cfg.feature_dim)
    present_ids = {d.id for d in present_diseases}
    labels = tuple(1 if d in present_ids else 0 for d in kb.disease_ids())
    return labels, frozenset(phenotypes), features


def sample_dataset(world, n, seed):
    """n labeled examples; example i uses its own derived seed, so sampling
    is independent of iteration order. Zero-label draws are resampled."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    examples = []
    for i in range(n):
        rng = np.random.default_rng(hash64(seed, i))
        sample = None
        for _ in range(_RESAMPLE_CAP):
            sample = _sample_one(world, rng)
            if sample is not None:
                break
        if sample is None:
            raise DegenerateWorldError(
                f"no disease present after {_RESAMPLE_CAP} resampling attempts"
            )
        labels, phenotypes, features = sample
        examples.append(
            LabeledExample(
                image_id=f"img-{seed:016x}-{i:06d}",
                features=features,
                labels=labels,
                phenotypes_present=phenotypes,
            )
        )
    return examples


def write_dataset(path, examples):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "image_id": ex.image_id,
                        "features": [float(v) for v in ex.features],
                        "labels": list(ex.labels),
                        "phenotypes_present": sorted(ex.phenotypes_present),
                    }
                )
                + "\n"
            )


def read_dataset(path):
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            examples.append(
                LabeledExample(
                    image_id=obj["image_id"],
                    features=np.array(obj["features"]),
                    labels=tuple(obj["labels"]),
                    phenotypes_present=frozenset(obj["phenotypes_present"]),
                )
            )
    return examples
