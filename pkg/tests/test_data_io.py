import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import pearsonr

from rpls import data_io as io
from rpls.exceptions import (ConstantSignal, EmptyInput, InvalidInput, NotPositiveDefinite,
                             OutOfDomain, ParseError)
from rpls.manifolds import EuclideanManifold, SPDManifold
from rpls.model import generate_synthetic, rpls_predict, tnipals_fit


def rank_deficient_correlation(R, T, rng):
    F = io.correlation_from_timeseries(rng.standard_normal((T, R)))
    return F


def test_correlation_oracle(rng):
    ts = rng.standard_normal((30, 4))
    F = io.correlation_from_timeseries(ts)
    for i in range(4):
        for j in range(4):
            assert F[i, j] == pytest.approx(pearsonr(ts[:, i], ts[:, j])[0], abs=1e-12)
    assert np.array_equal(np.diag(F), np.ones(4))
    ts[:, 2] = 5.0
    with pytest.raises(ConstantSignal) as info:
        io.correlation_from_timeseries(ts)
    assert info.value.column == 2


def test_correlation_trivial(rng):
    a = rng.standard_normal(10)
    F = io.correlation_from_timeseries(np.column_stack([a, a, -a]))
    assert_allclose(F, [[1, 1, -1], [1, 1, -1], [-1, -1, 1]], atol=1e-15)
    with pytest.raises(InvalidInput):
        io.correlation_from_timeseries(np.ones((2, 3)))


def test_regularize_shift(rng):
    assert_allclose(io.regularize(np.eye(3)), 2 * np.eye(3))
    F = rank_deficient_correlation(6, 4, rng)
    w = np.linalg.eigvalsh(F)
    assert w.min() < 1e-10
    Ft = io.regularize(F)
    assert_allclose(np.linalg.eigvalsh(Ft) - w, 1.0, atol=1e-10)
    with pytest.raises(NotPositiveDefinite):
        io.regularize(-3 * np.eye(3))


def test_fisher(rng):
    F = np.array([[1.0, 0.5], [0.5, 1.0]])
    Z = io.fisher_transform(F)
    assert Z[0, 1] == pytest.approx(0.5 * np.log(3.0))
    assert Z[0, 0] == 0.0
    with pytest.raises(OutOfDomain):
        io.fisher_transform(np.ones((2, 2)))
    G = rank_deficient_correlation(4, 10, rng)
    assert_allclose(io.fisher_transform(-G + 2 * np.eye(4)), -io.fisher_transform(G))
    assert_allclose(io.upper_triangle_features(np.eye(3)), [0, 0, 0])


def test_upper_triangle_roundtrip(rng):
    v = rng.standard_normal(10)
    F = io.from_upper_triangle(v, diagonal=1.0)
    assert F.shape == (5, 5) and np.all(np.diag(F) == 1)
    assert np.array_equal(io.upper_triangle_features(F), v)
    with pytest.raises(InvalidInput):
        io.from_upper_triangle(np.zeros(4))


def test_method_features(rng):
    F = np.stack([rank_deficient_correlation(4, 20, rng) for _ in range(3)])
    assert io.method_features(F, "raw").shape == (3, 6)
    assert io.method_features(F, "fisher").shape == (3, 6)
    assert_allclose(io.method_features(F, "riemannian", True), F + np.eye(4))
    with pytest.raises(InvalidInput):
        io.method_features(F, "euclid")
    assert io.coordinate_labels("raw", 3, ["a", "b", "c"]) == [("a", "b"), ("a", "c"), ("b", "c")]
    assert io.coordinate_labels("riemannian", 2) == [("roi1", "roi1"), ("roi2", "roi2"),
                                                     ("roi1", "roi2")]


def test_coefficient_matrix_and_networks():
    # Vec order for R = 3: (0,0) (1,1) (2,2) (0,1) (0,2) (1,2)
    M = io.coefficient_matrix([1, 2, 3, 4, 5, 6])
    assert_allclose(M, [[1, 4, 5], [4, 2, 6], [5, 6, 3]])
    U = io.coefficient_matrix([4, 5, 6], R=3)
    assert np.isnan(U[0, 0]) and U[1, 2] == 6
    net = io.NetworkMap(["a", "b", "c"], ["N1", "N1", "N2"])
    A = io.network_average([1, 2, 3, 4, 5, 6], net)
    assert_allclose(A, [[4, 5.5], [5.5, np.nan]])
    with pytest.raises(InvalidInput):
        io.NetworkMap(["a", "b"], ["N1", ""])


def test_network_average_oracles(rng):
    R = 5
    net = io.NetworkMap([f"r{i}" for i in range(R)], ["A", "B", "A", "B", "B"])
    assert_allclose(io.network_average(np.full(15, 0.3), net), np.full((2, 2), 0.3))
    coefs = rng.standard_normal(15)
    one = io.NetworkMap(net.roi_labels, ["A"] * R)
    # self-connections are excluded, so the grand mean is over off-diagonal pairs
    assert_allclose(io.network_average(coefs, one), [[coefs[R:].mean()]])
    M = io.coefficient_matrix(coefs)
    member = np.array([0, 1, 0, 1, 1])
    expected = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            vals = [M[i, j] for i in range(R) for j in range(R)
                    if i != j and member[i] == a and member[j] == b]
            expected[a, b] = np.mean(vals)
    assert_allclose(io.network_average(coefs, net), expected)
    with pytest.raises(InvalidInput):
        io.network_average(coefs, io.NetworkMap(["a", "b"], ["A", "B"]))


def test_top_quartile():
    A = np.diag([1.0, 2.0, 3.0, 4.0])
    mask = io.top_quartile_mask(A)
    assert mask[3, 3] and not mask[0, 1]


def write(path, text):
    path.write_text(text)
    return path


def test_read_matrix_errors(tmp_path):
    with pytest.raises(EmptyInput):
        io.read_matrix(write(tmp_path / "e.csv", "# nothing\n\n"))
    with pytest.raises(ParseError, match=":3:"):
        io.read_matrix(write(tmp_path / "a.csv", "1,2\n3,4\n5\n"))
    with pytest.raises(ParseError, match=":2:"):
        io.read_matrix(write(tmp_path / "b.csv", "1 2\n3 x\n"))
    with pytest.raises(ParseError, match=r":2: matrix not symmetric at column 2 \(2.0 vs 3.0\)"):
        io.read_square_matrix(write(tmp_path / "c.csv", "# header\n1,2\n3,1\n"))
    M = io.read_square_matrix(write(tmp_path / "d.csv", "1\t0.5\n0.5\t1\n"))
    assert_allclose(M, [[1, 0.5], [0.5, 1]])


def test_phenotypes(tmp_path):
    p = write(tmp_path / "p.csv", "subject_id,age,group\ns1,30,0\ns2,40,1\n")
    ids, names, vals = io.read_phenotypes(p, ["group"])
    assert ids == ["s1", "s2"] and names == ["group"]
    assert_allclose(vals, [[0], [1]])
    with pytest.raises(ParseError, match="unknown"):
        io.read_phenotypes(p, ["iq"])
    with pytest.raises(ParseError, match=":3:"):
        io.read_phenotypes(write(tmp_path / "q.csv", "subject_id,age\ns1,3\ns2,nan\n"))
    with pytest.raises(EmptyInput):
        io.read_phenotypes(write(tmp_path / "r.csv", "subject_id,age\n"))


def test_phenotype_encoding(tmp_path):
    p = write(tmp_path / "p.csv", "subject_id\tsex\tage\ns1\tM\t30\ns2\tF\t41\ns3\tM\t25\n")
    ids, names, vals, enc = io.read_phenotypes(p, return_encodings=True)
    assert enc == {"sex": {"F": 0.0, "M": 1.0}}
    assert_allclose(vals, [[1, 30], [0, 41], [1, 25]])
    bad = write(tmp_path / "q.csv", "subject_id,site\ns1,a\ns2,b\ns3,c\n")
    with pytest.raises(ParseError, match="two levels"):
        io.read_phenotypes(bad)
    with pytest.raises(ParseError, match=":3:.*missing"):
        io.read_phenotypes(write(tmp_path / "m.csv", "subject_id,sex\ns1,M\ns2,\n"))


def make_dataset(tmp_path, rng, n=6, R=3):
    mats = np.stack([rank_deficient_correlation(R, 30, rng) for _ in range(n)])
    ds = io.StudyDataset([f"s{i}" for i in range(n)], mats, rng.standard_normal((n, 2)),
                         ["y1", "y2"])
    io.save_dataset(tmp_path, ds)
    return ds


def test_dataset_roundtrip(tmp_path, rng):
    ds = make_dataset(tmp_path, rng)
    back = io.load_dataset(tmp_path / "manifest.csv", tmp_path / "phenotypes.csv")
    assert back.subject_ids == ds.subject_ids
    assert np.array_equal(back.matrices, ds.matrices)
    assert np.array_equal(back.responses, ds.responses)
    assert len(back.records()) == 6 and back.dim == 3
    with pytest.raises(ParseError, match="expected 4x4"):
        io.read_square_matrix(tmp_path / "matrices" / "s0.csv", dim=4)


def test_dataset_id_mismatch(tmp_path, rng):
    make_dataset(tmp_path, rng)
    with open(tmp_path / "phenotypes.csv", "a") as fh:
        fh.write("extra,1,2\n")
    with pytest.raises(InvalidInput, match="extra"):
        io.load_dataset(tmp_path / "manifest.csv", tmp_path / "phenotypes.csv")


def test_timeseries_dataset(tmp_path, rng):
    io.write_matrix(tmp_path / "a.csv", rng.standard_normal((20, 3)))
    io.write_matrix(tmp_path / "b.csv", rng.standard_normal((20, 3)))
    write(tmp_path / "m.csv", "subject_id,path\na,a.csv\nb,b.csv\n")
    write(tmp_path / "p.csv", "subject_id,y\nb,1\na,2\n")
    ds = io.load_dataset(tmp_path / "m.csv", tmp_path / "p.csv", timeseries=True)
    assert ds.subject_ids == ["b", "a"]
    assert ds.matrices.shape == (2, 3, 3)


def test_model_roundtrip(tmp_path):
    X, Y, _ = generate_synthetic(SPDManifold(3), EuclideanManifold(2), 30, 2,
                                 noise_scale=0.05, seed=1)
    model = tnipals_fit(X, Y, 2, scale_y=True)
    io.save_model(model, tmp_path / "m.json", {"method": "riemannian"})
    back, meta = io.load_model(tmp_path / "m.json")
    assert meta == {"method": "riemannian"}
    assert np.array_equal(rpls_predict(back, X), rpls_predict(model, X))
    assert np.array_equal(back.beta.coef, model.beta.coef)
    assert np.array_equal(back.mu_x, model.mu_x)
    d = json.loads((tmp_path / "m.json").read_text())
    d["version"] = 99
    (tmp_path / "m.json").write_text(json.dumps(d))
    with pytest.raises(ParseError, match="version"):
        io.load_model(tmp_path / "m.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ParseError):
        io.load_model(tmp_path / "bad.json")
