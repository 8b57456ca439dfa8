import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from povi import diagnostics, nnet
from povi.nnet import LayerSpec


# --- mode coverage ----------------------------------------------------------


def test_all_particles_at_one_center():
    centers = np.array([[0.0, 0.0], [10.0, 0.0]])
    report = diagnostics.mode_coverage(
        np.zeros((50, 2)), centers, radius=3.0, threshold=0.01
    )
    np.testing.assert_array_equal(report.fractions, [1.0, 0.0])
    assert report.unassigned == 0.0
    assert list(report.covered) == [True, False]
    assert report.n_covered == 1


def test_particles_outside_radius_unassigned():
    centers = np.array([[0.0]])
    report = diagnostics.mode_coverage(
        np.array([[0.5], [100.0]]), centers, radius=3.0, threshold=0.01
    )
    assert report.fractions[0] == 0.5
    assert report.unassigned == 0.5


def test_threshold_boundary_inclusive():
    centers = np.array([[0.0], [10.0]])
    particles = np.array([[0.0]] * 99 + [[10.0]])
    report = diagnostics.mode_coverage(particles, centers, radius=1.0, threshold=0.01)
    assert list(report.covered) == [True, True]  # 1% exactly meets the threshold


def test_nearest_center_assignment():
    centers = np.array([[0.0], [4.0]])
    report = diagnostics.mode_coverage(
        np.array([[1.9], [2.1]]), centers, radius=3.0, threshold=0.01
    )
    np.testing.assert_array_equal(report.fractions, [0.5, 0.5])


def test_mode_coverage_validation_and_dict():
    with pytest.raises(ValueError):
        diagnostics.mode_coverage(np.zeros((2, 1)), np.zeros((1, 1)), 0.0, 0.01)
    d = diagnostics.mode_coverage(
        np.zeros((2, 1)), np.zeros((1, 1)), 1.0, 0.01
    ).to_dict()
    assert set(d) == {"fractions", "unassigned", "covered", "n_covered"}


# --- MMD --------------------------------------------------------------------


def test_mmd2_frozen_small_example():
    # x = y = {0, 1}, h = 1: term_x = term_y = e^{-1},
    # mean k_xy = (1 + e^{-1}) / 2, so mmd2 = e^{-1} - 1; oracle value frozen
    got = diagnostics.mmd2(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]), 1.0)
    assert got == pytest.approx(-0.6321205588285577, abs=1e-14)


def test_mmd2_same_distribution_near_zero():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((400, 2))
    y = rng.standard_normal((400, 2))
    assert abs(diagnostics.mmd2(x, y, 1.0)) < 0.01


def test_mmd2_separated_distributions_large():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((100, 2))
    y = rng.standard_normal((100, 2)) + 10.0
    assert diagnostics.mmd2(x, y, 1.0) > 0.3


@given(seed=st.integers(0, 100))
@settings(max_examples=25, deadline=None)
def test_mmd2_symmetric_in_arguments(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((6, 2))
    y = rng.standard_normal((8, 2)) + 1.0
    assert diagnostics.mmd2(x, y, 1.5) == pytest.approx(
        diagnostics.mmd2(y, x, 1.5), abs=1e-12
    )


def test_mmd2_needs_two_samples_each_side():
    with pytest.raises(ValueError):
        diagnostics.mmd2(np.zeros((1, 1)), np.zeros((5, 1)), 1.0)


# --- ensemble metrics -------------------------------------------------------


def random_members(seed, m=4, spec=LayerSpec((2, 5, 3))):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(spec.n_params) for _ in range(m)], spec


def test_bma_rows_are_distributions():
    members, spec = random_members(0)
    probs = diagnostics.bma_predict(members, spec, np.random.default_rng(1).standard_normal((10, 2)))
    assert probs.shape == (10, 3)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(probs >= 0)


def test_bma_single_member_is_softmax():
    members, spec = random_members(2, m=1)
    x = np.random.default_rng(3).standard_normal((5, 2))
    want = nnet.softmax_rows(nnet.forward(spec, members[0], x))
    np.testing.assert_allclose(diagnostics.bma_predict(members, spec, x), want, atol=1e-14)


def test_bma_needs_members():
    with pytest.raises(ValueError):
        diagnostics.bma_predict([], LayerSpec((2, 2)), np.zeros((1, 2)))


@given(seed=st.integers(0, 100))
@settings(max_examples=25, deadline=None)
def test_bma_nll_jensen_inequality(seed):
    # mixing before the log can only lower the NLL (Jensen)
    members, spec = random_members(seed)
    rng = np.random.default_rng(seed + 1000)
    x = rng.standard_normal((12, 2))
    y = rng.integers(0, 3, size=12)
    idx = np.arange(len(y))
    bma_nll = -np.mean(np.log(diagnostics.bma_predict(members, spec, x)[idx, y]))
    member_nlls = [
        -np.mean(np.log(nnet.softmax_rows(nnet.forward(spec, th, x))[idx, y]))
        for th in members
    ]
    assert bma_nll <= np.mean(member_nlls) + 1e-10


def test_disagreement_zero_for_identical_members():
    members, spec = random_members(5)
    clones = [members[0]] * 4
    x = np.random.default_rng(6).standard_normal((9, 2))
    assert diagnostics._mean_disagreement(clones, spec, x) == 0.0


def test_disagreement_bounds():
    members, spec = random_members(7, m=6)
    x = np.random.default_rng(8).standard_normal((9, 2))
    md = diagnostics._mean_disagreement(members, spec, x)
    assert 0.0 <= md <= 1.0


def test_ensemble_eval_fields_and_ratios():
    members, spec = random_members(9)
    rng = np.random.default_rng(10)
    test_x = rng.standard_normal((20, 2))
    test_y = rng.integers(0, 3, size=20)
    ood_x = rng.standard_normal((15, 2)) + 5.0
    ev = diagnostics.ensemble_eval(members, spec, test_x, test_y, ood_x)
    assert 0.0 <= ev.accuracy <= 1.0
    assert ev.nll >= 0.0
    assert ev.entropy_ratio == pytest.approx(ev.entropy_ood / ev.entropy_test)
    assert ev.md_ratio == pytest.approx(ev.md_ood / ev.md_test)
    assert set(ev.to_dict()) == {
        "accuracy",
        "nll",
        "entropy_test",
        "entropy_ood",
        "md_test",
        "md_ood",
        "entropy_ratio",
        "md_ratio",
    }


def test_ensemble_eval_ratios_none_when_degenerate():
    # one member with saturated logits: zero test entropy and zero disagreement
    spec = LayerSpec((1, 2))
    theta = np.array([1000.0, -1000.0, 0.0, 0.0])  # W = [[1000, -1000]], b = 0
    ev = diagnostics.ensemble_eval(
        [theta], spec, np.ones((4, 1)), np.zeros(4, dtype=int), np.ones((4, 1))
    )
    assert ev.entropy_test == 0.0 and ev.entropy_ratio is None
    assert ev.md_test == 0.0 and ev.md_ratio is None


def test_ensemble_eval_rejects_empty_sets():
    members, spec = random_members(11)
    with pytest.raises(ValueError):
        diagnostics.ensemble_eval(
            members, spec, np.zeros((0, 2)), np.zeros(0, dtype=int), np.ones((2, 2))
        )
