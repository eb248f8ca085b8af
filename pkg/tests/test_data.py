import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocpad.baselines import fit_mahalanobis
from ocpad.data import (
    Dataset,
    SyntheticSpec,
    attack_directions,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_protocol,
)
from ocpad.errors import ConfigError, ContractError, ParseError, ShapeError, SplitError
from ocpad.evaluation import best_acer, evaluate_per_identity


def test_default_benchmark_shape():
    ds = generate_synthetic(SyntheticSpec())
    assert ds.dim == 32 and len(ds) == 12 * 80
    assert len(ds.identity_set()) == 12
    assert int(ds.is_attack.sum()) == 12 * 40


def test_same_seed_identical_dataset():
    assert generate_synthetic(SyntheticSpec(seed=3)) == generate_synthetic(SyntheticSpec(seed=3))
    assert generate_synthetic(SyntheticSpec(seed=3)) != generate_synthetic(SyntheticSpec(seed=4))


@pytest.mark.parametrize("field,value", [("attack_offset", 0.0), ("num_identities", 0), ("manifold_dim", 0),
                                         ("offset_mode", "sideways")])
def test_spec_validation(field, value):
    with pytest.raises(ConfigError):
        generate_synthetic(dataclasses.replace(SyntheticSpec(), **{field: value}))


def test_attack_offset_along_direction():
    # zero noise isolates the offset itself
    spec = SyntheticSpec(num_identities=3, bonafide_per_identity=2, attack_per_identity=2, dim=6,
                         identity_spread=0.0, off_manifold_spread=0.0, attack_offset=2.5,
                         offset_mode="per_identity_direction")
    ds = generate_synthetic(spec)
    u = attack_directions(spec)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0)
    for i, ident in enumerate(sorted(ds.identity_set())):
        m = ds.identities == ident
        shift = ds.features[m & ds.is_attack][0] - ds.features[m & ~ds.is_attack][0]
        np.testing.assert_allclose(shift, 2.5 * u[i], atol=1e-12)


def oracle_projection_acer(spec):
    """Mean per-identity best ACER of scoring by minus the projection on the true offset."""
    ds = generate_synthetic(spec)
    u = attack_directions(spec)
    order = sorted(ds.identity_set())
    proj = np.array([-ds.features[k] @ u[order.index(i)] for k, i in enumerate(ds.identities)])
    return evaluate_per_identity(proj, ds.is_attack, ds.identities).mean_acer


def test_near_overlap_still_beats_chance_for_oracle():
    spec = SyntheticSpec(attack_offset=0.01)
    assert oracle_projection_acer(spec) < 50.0


def test_huge_offset_is_easy_for_mahalanobis():
    ds = generate_synthetic(SyntheticSpec(attack_offset=100.0))
    tr, te = split_protocol(ds, "p1", 0.5, np.random.default_rng(0))
    model = fit_mahalanobis(tr)
    assert evaluate_per_identity(model.score(te.features), te.is_attack, te.identities).mean_acer < 5.0


def test_isotropic_layout_option():
    ds = generate_synthetic(SyntheticSpec(manifold_dim=None, num_identities=2))
    assert ds.dim == 32


def _small(seed=0, n_ids=20):
    return generate_synthetic(SyntheticSpec(num_identities=n_ids, bonafide_per_identity=6,
                                            attack_per_identity=4, dim=3, seed=seed))


def test_p1_identity_split():
    ds = _small()
    tr, te = split_protocol(ds, "p1", 0.5, np.random.default_rng(1))
    assert tr.identity_set().isdisjoint(te.identity_set())
    assert tr.identity_set() | te.identity_set() == ds.identity_set()
    assert len(tr.identity_set()) == 10
    assert not tr.is_attack.any()
    # held-out identities keep every sample
    assert len(te) == 10 * 10


def test_p2_within_identity_split():
    ds = _small()
    tr, te = split_protocol(ds, "p2", 0.5, np.random.default_rng(1))
    assert te.identity_set() <= tr.identity_set()
    assert not tr.is_attack.any()
    assert int(te.is_attack.sum()) == int(ds.is_attack.sum())
    assert len(tr) + len(te) == len(ds)
    assert tr.metadata["side"] == "train" and te.metadata["protocol"] == "p2"


@pytest.mark.parametrize("protocol,fraction", [("p1", 0.01), ("p1", 0.99), ("p2", 0.05), ("p3", 0.5), ("p1", 1.0)])
def test_split_errors(protocol, fraction):
    with pytest.raises(SplitError):
        split_protocol(_small(), protocol, fraction, np.random.default_rng(0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["p1", "p2"]), st.floats(0.2, 0.8))
def test_split_invariants(seed, protocol, fraction):
    ds = _small(seed % 7, n_ids=8)
    tr, te = split_protocol(ds, protocol, fraction, np.random.default_rng(seed))
    assert not tr.is_attack.any()
    if protocol == "p1":
        assert tr.identity_set().isdisjoint(te.identity_set())
    else:
        assert te.identity_set() <= tr.identity_set()


def test_split_is_seed_deterministic():
    ds = _small()
    a = split_protocol(ds, "p2", 0.5, np.random.default_rng(9))
    b = split_protocol(ds, "p2", 0.5, np.random.default_rng(9))
    assert a[0] == b[0] and a[1] == b[1]


def test_minimal_file(tmp_path):
    path = tmp_path / "mini.txt"
    path.write_text("dim=2\nalice,bonafide,0.5,1.0\nalice,attack,-1,2e-3\n")
    ds = load_dataset(path)
    assert list(ds.labels) == ["bonafide", "attack"]
    assert ds.features.tolist() == [[0.5, 1.0], [-1.0, 0.002]]


@pytest.mark.parametrize("body,line", [
    ("dim=3\na,bonafide,1,2,3\nb,attack,1,2\n", 3),
    ("dim=2\n# ok=1\na,fake,1,2\n", 3),
    ("dim=2\na,bonafide,1,x\n", 2),
    ("dim=2\na,bonafide,1,inf\n", 2),
    ("dims=2\n", 1),
    ("dim=2\n# no separator\n", 2),
])
def test_parse_errors_name_line(tmp_path, body, line):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(ParseError, match=f"line {line}:"):
        load_dataset(path)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 12))
def test_round_trip_exact(tmp_path_factory, seed, d, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=10.0 ** rng.integers(-5, 5), size=(n, d))
    labels = rng.choice(["bonafide", "attack"], size=n)
    ds = Dataset(x, [f"u{i % 3}" for i in range(n)], labels, {"name": "r", "seed": seed})
    path = tmp_path_factory.mktemp("rt") / "ds.txt"
    save_dataset(ds, path)
    assert load_dataset(path) == ds


def test_dataset_validation():
    with pytest.raises(ShapeError):
        Dataset(np.zeros((0, 2)), [], [])
    with pytest.raises(ContractError):
        Dataset(np.zeros((1, 2)), ["a"], ["spoof"])
    with pytest.raises(ContractError):
        Dataset(np.zeros((1, 2)), ["a,b"], ["attack"])
    with pytest.raises(ContractError):
        Dataset(np.full((1, 2), np.nan), ["a"], ["attack"])


def test_samples_view():
    ds = _small(n_ids=2)
    s = list(ds.samples())
    assert len(s) == len(ds) and s[0].identity == ds.identities[0]


def test_best_acer_consistency_with_oracle_scores():
    # sanity: a direct projection on a clearly separated set reaches zero error
    spec = SyntheticSpec(attack_offset=20.0, num_identities=2)
    ds = generate_synthetic(spec)
    proj = -ds.features @ attack_directions(spec)[0]
    assert best_acer(proj, ds.is_attack)[1] == 0.0
