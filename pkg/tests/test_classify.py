"""Classifiers, splitting, accuracy metrics and separability."""

import numpy as np
import pytest

from hxkit.classify import (evaluate, grid_search, load_classifier, predict,
                            save_classifier, separability, stratified_split,
                            train, write_class_spectra_csv)
from hxkit.cube import LabelMask, scale_cube
from hxkit.envi_io import HyperCube

from .synth import default_header


def _two_class_scene(sep=4.0, lines=10, samples=10, bands=4, seed=0):
    """Two well-separated Gaussian blobs; class 1 on the left half."""
    rng = np.random.default_rng(seed)
    labels = np.zeros((lines, samples), dtype=int)
    labels[:, : samples // 2] = 1
    labels[:, samples // 2:] = 2
    mu1 = np.full(bands, 1.0)
    mu2 = mu1 + sep / np.sqrt(bands)
    values = np.where((labels == 1)[:, :, None], mu1, mu2) \
        + rng.normal(0, 0.2, (lines, samples, bands))
    cube = HyperCube(default_header(lines, samples, bands), values)
    return cube, LabelMask(labels, {1: "left", 2: "right"})


# ---------------------------------------------------------------------------
# Stratified split
# ---------------------------------------------------------------------------

def test_split_fraction_one_is_all_train():
    _, mask = _two_class_scene()
    train_mask, test_mask = stratified_split(mask, 1.0, seed=0)
    assert np.array_equal(train_mask.labels, mask.labels)
    assert np.all(test_mask.labels == 0)


def test_split_singleton_class_goes_to_train():
    labels = np.zeros((3, 3), dtype=int)
    labels[0, 0] = 1
    labels[1, :] = 2
    mask = LabelMask(labels, {1: "rare", 2: "common"})
    train_mask, _ = stratified_split(mask, 0.5, seed=0)
    assert train_mask.labels[0, 0] == 1  # ceiling rule


def test_split_disjoint_and_deterministic():
    _, mask = _two_class_scene()
    a_train, a_test = stratified_split(mask, 0.6, seed=9)
    b_train, b_test = stratified_split(mask, 0.6, seed=9)
    assert np.array_equal(a_train.labels, b_train.labels)
    assert np.array_equal(a_test.labels, b_test.labels)
    assert not np.any((a_train.labels != 0) & (a_test.labels != 0))
    union = np.where(a_train.labels != 0, a_train.labels, a_test.labels)
    assert np.array_equal(union, mask.labels)


def test_split_fraction_validation():
    _, mask = _two_class_scene()
    with pytest.raises(ValueError):
        stratified_split(mask, 0.0, seed=0)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def test_train_single_class():
    cube, _ = _two_class_scene()
    labels = np.zeros((10, 10), dtype=int)
    labels[0, :] = 1
    model = train(cube, LabelMask(labels, {1: "only"}), "sam")
    assert model.class_ids == [1]
    assert model.class_means.shape == (1, cube.bands)


def test_train_gaussian_constant_class_regularized():
    values = np.ones((4, 4, 3))
    values[:, 2:, :] = 2.0
    cube = HyperCube(default_header(4, 4, 3), values)
    labels = np.ones((4, 4), dtype=int)
    labels[:, 2:] = 2
    model = train(cube, LabelMask(labels, {1: "a", 2: "b"}), "gaussian_ml")
    # constant classes: covariance collapses to the epsilon ridge
    for cov in model.class_covs:
        assert np.allclose(cov, cov[0, 0] * np.eye(3))
        assert cov[0, 0] > 0


def test_train_gaussian_needs_two_samples():
    cube, _ = _two_class_scene()
    labels = np.zeros((10, 10), dtype=int)
    labels[0, 0] = 1
    labels[1, :] = 2
    with pytest.raises(ValueError, match="fewer than 2"):
        train(cube, LabelMask(labels, {1: "tiny", 2: "ok"}), "gaussian_ml")


def test_train_knn_validation():
    cube, mask = _two_class_scene()
    with pytest.raises(ValueError, match="odd"):
        train(cube, mask, "knn", k=4)
    with pytest.raises(ValueError, match="exceeds"):
        train(cube, mask, "knn", k=101)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["sam", "gaussian_ml", "knn"])
def test_predict_class_mean_pixel(kind):
    cube, mask = _two_class_scene(seed=1)
    model = train(cube, mask, kind)
    probe = cube.values.copy()
    probe[0, 0] = model.class_means[0]
    probe[0, 1] = model.class_means[1]
    pcube = HyperCube(cube.header.copy(), probe)
    out = predict(model, pcube)
    assert out.labels[0, 0] == 1
    assert out.labels[0, 1] == 2


def test_sam_threshold_zero_unclassifies():
    cube, mask = _two_class_scene(seed=2)
    model = train(cube, mask, "sam", sam_threshold_rad=0.0)
    out = predict(model, cube)
    # only pixels exactly equal (angle 0) to a mean could survive
    assert np.count_nonzero(out.labels) <= 1


def test_gaussian_tiebreak_smallest_class():
    # two symmetric classes, probe exactly between them
    rng = np.random.default_rng(3)
    base = rng.normal(0, 0.5, (50, 2))
    values = np.concatenate([base + [-2.0, 0.0], -base + [2.0, 0.0]])
    cube = HyperCube(default_header(10, 10, 2), values.reshape(10, 10, 2))
    labels = np.concatenate([np.ones(50, dtype=int), np.full(50, 2, dtype=int)])
    mask = LabelMask(labels.reshape(10, 10), {1: "a", 2: "b"})
    model = train(cube, mask, "gaussian_ml")
    probe = np.zeros((1, 1, 2))
    out = predict(model, HyperCube(default_header(1, 1, 2), probe))
    assert out.labels[0, 0] == 1


def test_sam_scale_invariance():
    # invariant even under a different positive factor per pixel
    cube, mask = _two_class_scene(seed=4)
    model = train(cube, mask, "sam")
    a = predict(model, cube)
    factors = np.random.default_rng(5).uniform(0.1, 50.0, (10, 10, 1))
    scaled = HyperCube(cube.header.copy(), cube.values * factors)
    b = predict(model, scaled)
    assert np.array_equal(a.labels, b.labels)
    c = predict(model, scale_cube(cube, 37.0))
    assert np.array_equal(a.labels, c.labels)


def test_gaussian_prior_shift_invariance():
    # renormalizing priors adds a constant to every discriminant
    cube, mask = _two_class_scene(seed=5)
    model = train(cube, mask, "gaussian_ml")
    out1 = predict(model, cube)
    model.priors = model.priors * 3.0  # unnormalized priors, same ratios
    out2 = predict(model, cube)
    assert np.array_equal(out1.labels, out2.labels)


def test_knn_deterministic_and_accurate():
    cube, mask = _two_class_scene(seed=6)
    model = train(cube, mask, "knn", k=5)
    out = predict(model, cube)
    agree = np.mean(out.labels == mask.labels)
    assert agree > 0.95


def test_classifier_json_round_trip(tmp_path):
    cube, mask = _two_class_scene(seed=7)
    for kind in ("sam", "gaussian_ml", "knn"):
        model = train(cube, mask, kind)
        save_classifier(model, tmp_path / f"{kind}.json")
        back = load_classifier(tmp_path / f"{kind}.json")
        assert np.array_equal(predict(back, cube).labels, predict(model, cube).labels)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _mask_pair_from_confusion(confusion: np.ndarray):
    """Build reference/predicted masks whose confusion matrix is as given."""
    ref_rows, pred_rows = [], []
    for i in range(confusion.shape[0]):
        for j in range(confusion.shape[1]):
            ref_rows += [i + 1] * confusion[i, j]
            pred_rows += [j + 1] * confusion[i, j]
    n = len(ref_rows)
    names = {i + 1: f"c{i + 1}" for i in range(confusion.shape[0])}
    ref = LabelMask(np.array(ref_rows).reshape(1, n), names)
    pred = LabelMask(np.array(pred_rows).reshape(1, n), names)
    return pred, ref


def test_evaluate_perfect():
    _, mask = _two_class_scene()
    report = evaluate(mask, mask)
    assert report.overall_accuracy == 1.0
    assert report.kappa == 1.0
    assert np.all(report.confusion == np.diag(np.diag(report.confusion)))


def test_evaluate_hand_fixture():
    # confusion [[2,1],[0,3]]: OA = 5/6; p_e = (3*2 + 3*4)/36 = 0.5; kappa = 2/3
    confusion = np.array([[2, 1], [0, 3]])
    pred, ref = _mask_pair_from_confusion(confusion)
    report = evaluate(pred, ref)
    assert np.array_equal(report.confusion, confusion)
    assert report.overall_accuracy == pytest.approx(5.0 / 6.0, abs=1e-12)
    # oracle: direct evaluation of the kappa definition
    total = confusion.sum()
    p_o = np.trace(confusion) / total
    p_e = float(np.sum(confusion.sum(1) * confusion.sum(0))) / total**2
    kappa = (p_o - p_e) / (1 - p_e)
    assert kappa == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert report.kappa == pytest.approx(kappa, abs=1e-12)


def test_evaluate_all_one_class_kappa_zero():
    # balanced reference, constant prediction: p_o == p_e -> kappa 0
    ref_labels = np.array([[1, 1, 2, 2]])
    pred_labels = np.array([[1, 1, 1, 1]])
    names = {1: "a", 2: "b"}
    report = evaluate(LabelMask(pred_labels, names), LabelMask(ref_labels, names))
    assert report.kappa == pytest.approx(0.0, abs=1e-12)
    assert report.overall_accuracy == pytest.approx(0.5)


def test_evaluate_excludes_unlabeled():
    ref = LabelMask(np.array([[0, 1, 2]]), {1: "a", 2: "b"})
    pred = LabelMask(np.array([[2, 1, 2]]), {1: "a", 2: "b"})
    report = evaluate(pred, ref)
    assert report.total == 2
    assert report.overall_accuracy == 1.0


def test_kappa_never_exceeds_oa_for_positive_pe():
    rng = np.random.default_rng(8)
    for _ in range(20):
        confusion = rng.integers(0, 9, (3, 3)) + np.diag(rng.integers(1, 9, 3))
        pred, ref = _mask_pair_from_confusion(confusion)
        report = evaluate(pred, ref)
        assert report.kappa <= report.overall_accuracy + 1e-12


# ---------------------------------------------------------------------------
# Separability
# ---------------------------------------------------------------------------

def _exact_stats_scene():
    """Two classes with exact sample stats: means 2 apart, identity covariance."""
    c = np.sqrt(1.5)  # 4-point set with ddof=1 covariance = I in 2-D
    base = np.array([[c, 0.0], [-c, 0.0], [0.0, c], [0.0, -c]])
    class2 = base + np.array([2.0, 0.0])
    values = np.concatenate([base, class2]).reshape(2, 4, 2)
    cube = HyperCube(default_header(2, 4, 2), values)
    labels = np.array([[1, 1, 1, 1], [2, 2, 2, 2]])
    return cube, LabelMask(labels, {1: "a", 2: "b"})


def test_separability_closed_form_fixture():
    # B = (1/8) d^T I^-1 d = 0.5 for |d| = 2; JM = 2(1 - e^-0.5)
    cube, mask = _exact_stats_scene()
    rep = separability(cube, mask)
    pair = rep.pairs[0]
    assert pair["bhattacharyya"] == pytest.approx(0.5, abs=1e-9)
    expected_jm = 2.0 * (1.0 - np.exp(-0.5))
    assert expected_jm == pytest.approx(0.78694, abs=1e-5)
    assert pair["jeffries_matusita"] == pytest.approx(expected_jm, abs=1e-9)


def test_separability_identical_distributions_zero():
    cube, _ = _exact_stats_scene()
    values = np.concatenate([cube.values[0], cube.values[0]]).reshape(2, 4, 2)
    same = HyperCube(cube.header.copy(), values)
    mask = LabelMask(np.array([[1, 1, 1, 1], [2, 2, 2, 2]]), {1: "a", 2: "b"})
    rep = separability(same, mask)
    assert rep.pairs[0]["bhattacharyya"] == pytest.approx(0.0, abs=1e-12)
    assert rep.pairs[0]["jeffries_matusita"] == pytest.approx(0.0, abs=1e-12)


def test_jm_bounded_and_symmetric():
    cube, mask = _two_class_scene(seed=9, bands=3)
    rep = separability(cube, mask)
    for pair in rep.pairs:
        assert 0.0 <= pair["jeffries_matusita"] <= 2.0
    flipped = LabelMask(np.where(mask.labels == 1, 2, 1), {1: "right", 2: "left"})
    rep2 = separability(cube, flipped)
    assert rep.pairs[0]["jeffries_matusita"] == pytest.approx(
        rep2.pairs[0]["jeffries_matusita"], abs=1e-12)


def test_band_ranking_prefers_informative_band():
    rng = np.random.default_rng(10)
    lines, samples = 6, 10
    labels = np.zeros((lines, samples), dtype=int)
    labels[:, :5] = 1
    labels[:, 5:] = 2
    values = rng.normal(0, 0.1, (lines, samples, 3))
    values[:, 5:, 0] += 5.0  # band 0 separates the classes
    cube = HyperCube(default_header(lines, samples, 3), values)
    rep = separability(cube, LabelMask(labels, {1: "a", 2: "b"}))
    assert rep.band_ranking[0] == 0


def test_class_spectra_csv(tmp_path):
    cube, mask = _two_class_scene(seed=11)
    rep = separability(cube, mask)
    path = tmp_path / "spectra.csv"
    write_class_spectra_csv(rep, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("band,wavelength_nm,mean_left,std_left")
    assert len(lines) == cube.bands + 1


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

def test_grid_search_knn():
    cube, mask = _two_class_scene(seed=12)
    result = grid_search(cube, mask, "knn", [1, 3, 5], seed=1)
    assert len(result["rows"]) == 3
    assert result["best"] in (1, 3, 5)
    again = grid_search(cube, mask, "knn", [1, 3, 5], seed=1)
    assert result == again
