import numpy as np
import pytest

from kinject.errors import ConfigError, DegenerateWorldError
from kinject.knowledge import KnowledgeBase, DiseaseEntry, Phenotype
from kinject.world import (
    WorldConfig,
    make_world,
    read_dataset,
    sample_dataset,
    write_dataset,
)


def tiny_kb():
    return KnowledgeBase(
        phenotypes=(Phenotype("p1", "one"), Phenotype("p2", "two")),
        diseases=(DiseaseEntry("d1", "D1", ("p1",), ()),),
    )


def test_config_validation():
    with pytest.raises(ConfigError):
        WorldConfig(kb=tiny_kb(), disease_prevalence=1.5)
    with pytest.raises(ConfigError):
        WorldConfig(kb=tiny_kb(), noise_sigma=-0.1)
    with pytest.raises(ConfigError):
        WorldConfig(kb=tiny_kb(), feature_dim=1)


def test_signatures_orthonormal(kb):
    world = make_world(WorldConfig(kb=kb, seed=0))
    gram = world.signatures @ world.signatures.T
    assert np.allclose(gram, np.eye(len(kb.phenotypes)), atol=1e-9)


def test_signatures_deterministic(kb):
    a = make_world(WorldConfig(kb=kb, seed=3))
    b = make_world(WorldConfig(kb=kb, seed=3))
    assert np.array_equal(a.signatures, b.signatures)
    c = make_world(WorldConfig(kb=kb, seed=4))
    assert not np.array_equal(a.signatures, c.signatures)


def test_noiseless_single_factor_features():
    cfg = WorldConfig(
        kb=tiny_kb(),
        feature_dim=8,
        noise_sigma=0.0,
        disease_prevalence=1.0,
        p_typ_given_disease=1.0,
        p_phen_background=0.0,
        seed=0,
    )
    world = make_world(cfg)
    for ex in sample_dataset(world, 5, 0):
        assert ex.labels == (1,)
        assert ex.phenotypes_present == frozenset({"p1"})
        assert np.array_equal(ex.features, world.signature_of("p1"))


def test_excluded_phenotypes_hard_constraint(kb):
    world = make_world(WorldConfig(kb=kb, seed=1))
    for ex in sample_dataset(world, 300, 11):
        forced_absent = set()
        for did in ex.present_disease_ids(kb):
            forced_absent.update(kb.disease_by_id(did).excluded)
        assert ex.phenotypes_present & forced_absent == set()


def test_every_example_has_a_disease(kb):
    world = make_world(WorldConfig(kb=kb, seed=2))
    for ex in sample_dataset(world, 200, 5):
        assert sum(ex.labels) >= 1


def test_sampling_deterministic(kb):
    world = make_world(WorldConfig(kb=kb, seed=0))
    a = sample_dataset(world, 50, 9)
    b = sample_dataset(world, 50, 9)
    assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))
    assert [x.labels for x in a] == [y.labels for y in b]
    assert [x.image_id for x in a] == [y.image_id for y in b]


def test_empirical_prevalence(kb):
    # use a prevalence high enough that the at-least-one-disease resampling
    # rule conditions away a negligible fraction of draws
    world = make_world(WorldConfig(kb=kb, seed=0, disease_prevalence=0.5))
    examples = sample_dataset(world, 10_000, 0)
    labels = np.array([ex.labels for ex in examples], dtype=float)
    rates = labels.mean(axis=0)
    assert np.all(np.abs(rates - 0.5) <= 0.03), rates


def test_noisy_feature_mean():
    cfg = WorldConfig(
        kb=tiny_kb(),
        feature_dim=8,
        noise_sigma=0.5,
        disease_prevalence=1.0,
        p_typ_given_disease=1.0,
        p_phen_background=0.0,
        seed=0,
    )
    world = make_world(cfg)
    examples = sample_dataset(world, 10_000, 1)
    mean = np.mean([ex.features for ex in examples], axis=0)
    tol = 3 * cfg.noise_sigma / np.sqrt(len(examples))
    assert np.all(np.abs(mean - world.signature_of("p1")) <= tol)


def test_degenerate_world_error():
    cfg = WorldConfig(kb=tiny_kb(), feature_dim=8, disease_prevalence=0.0)
    world = make_world(cfg)
    with pytest.raises(DegenerateWorldError):
        sample_dataset(world, 1, 0)


def test_sample_dataset_n_validation(kb):
    world = make_world(WorldConfig(kb=kb, seed=0))
    with pytest.raises(ConfigError):
        sample_dataset(world, 0, 0)


def test_dataset_round_trip(tmp_path, kb):
    world = make_world(WorldConfig(kb=kb, seed=0))
    examples = sample_dataset(world, 10, 2)
    path = tmp_path / "dataset.jsonl"
    write_dataset(path, examples)
    loaded = read_dataset(path)
    assert len(loaded) == len(examples)
    for a, b in zip(examples, loaded):
        assert a.image_id == b.image_id
        assert a.labels == b.labels
        assert a.phenotypes_present == b.phenotypes_present
        assert np.allclose(a.features, b.features)
