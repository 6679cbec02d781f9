import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from heraldsim import (
    ParameterError,
    apply_crosstalk,
    click_povm,
    detection_matrix,
    loss_matrix,
    reference_detection_matrix,
)
from heraldsim.detector_model import ClickPovm, write_matrix_csv

# Published response table of the reference 4-pixel configuration
# (transmission 0.7, crosstalk 0.025), printed to three decimals.
REFERENCE_TABLE = np.array(
    [
        [1.000, 0.000, 0.000, 0.000, 0.000],
        [0.300, 0.682, 0.017, 0.000, 0.000],
        [0.090, 0.529, 0.372, 0.009, 0.000],
        [0.027, 0.313, 0.519, 0.139, 0.003],
        [0.008, 0.167, 0.500, 0.295, 0.030],
        [0.002, 0.085, 0.412, 0.417, 0.084],
        [0.001, 0.042, 0.312, 0.487, 0.158],
        [0.000, 0.020, 0.225, 0.510, 0.245],
        [0.000, 0.010, 0.157, 0.498, 0.335],
        [0.000, 0.005, 0.107, 0.465, 0.423],
        [0.000, 0.002, 0.072, 0.421, 0.505],
    ]
)

# Printed values carry +-5e-4 rounding; the extra 1e-9 is float slack for
# differences that sit exactly on the half-unit boundary.
TABLE_ATOL = 5e-4 + 1e-9


def brute_force_clicks(n_photons: int, n_pixels: int) -> np.ndarray:
    """Exact click distribution by enumerating all pixel assignments."""
    counts = np.zeros(n_pixels + 1)
    for assignment in itertools.product(range(n_pixels), repeat=n_photons):
        counts[len(set(assignment))] += 1
    return counts / n_pixels**n_photons


class TestLossMatrix:
    def test_unit_transmission_is_identity(self):
        np.testing.assert_array_equal(loss_matrix(1.0, 6).entries, np.eye(7))

    def test_zero_transmission(self):
        entries = loss_matrix(0.0, 5).entries
        np.testing.assert_array_equal(entries[:, 0], np.ones(6))

    def test_row_two_at_70_percent(self):
        entries = loss_matrix(0.7, 4).entries
        np.testing.assert_allclose(entries[2, :3], [0.09, 0.42, 0.49], atol=1e-12)

    def test_matches_scipy_binomial(self):
        entries = loss_matrix(0.37, 9).entries
        for i in range(10):
            np.testing.assert_allclose(
                entries[i, : i + 1], stats.binom.pmf(np.arange(i + 1), i, 0.37), atol=1e-12
            )

    def test_upper_triangle_zero(self):
        entries = loss_matrix(0.5, 6).entries
        assert np.all(entries[np.triu_indices(7, k=1)] == 0.0)

    def test_domain_errors(self):
        with pytest.raises(ParameterError):
            loss_matrix(1.5, 4)
        with pytest.raises(ParameterError):
            loss_matrix(-0.1, 4)


class TestClickPovm:
    def test_single_photon_single_click(self):
        entries = click_povm(4, 3).entries
        assert entries[1, 1] == pytest.approx(1.0, abs=1e-12)

    def test_two_photons_four_pixels(self):
        entries = click_povm(4, 3).entries
        assert entries[2, 1] == pytest.approx(0.25, abs=1e-12)
        assert entries[2, 2] == pytest.approx(0.75, abs=1e-12)

    def test_three_photons_four_pixels(self):
        entries = click_povm(4, 3).entries
        np.testing.assert_allclose(
            entries[3, 1:4], [1 / 16, 9 / 16, 6 / 16], atol=1e-12
        )

    @pytest.mark.parametrize("n_pixels", [2, 3, 4, 5])
    def test_brute_force_enumeration(self, n_pixels):
        entries = click_povm(n_pixels, 6).entries
        for n in range(7):
            np.testing.assert_allclose(
                entries[n], brute_force_clicks(n, n_pixels), atol=1e-12
            )

    def test_support_limited_by_photons_and_pixels(self):
        entries = click_povm(4, 8).entries
        for n in range(9):
            for k in range(5):
                if k > min(n, 4):
                    assert entries[n, k] == 0.0


class TestApplyCrosstalk:
    def test_zero_is_identity(self):
        povm = click_povm(4, 6)
        np.testing.assert_array_equal(apply_crosstalk(povm, 0.0).entries, povm.entries)

    def test_single_click_row(self):
        povm = ClickPovm(
            entries=np.array([[0.0, 1.0, 0.0, 0.0, 0.0]]), n_pixels=4, crosstalk_prob=0.0
        )
        out = apply_crosstalk(povm, 0.025).entries
        np.testing.assert_allclose(out, [[0.0, 0.975, 0.025, 0.0, 0.0]], atol=1e-15)

    def test_hand_worked_row(self):
        povm = ClickPovm(
            entries=np.array([[0.0, 0.25, 0.75, 0.0, 0.0]]), n_pixels=4, crosstalk_prob=0.0
        )
        out = apply_crosstalk(povm, 0.025).entries
        np.testing.assert_allclose(
            out, [[0.0, 0.24375, 0.7375, 0.01875, 0.0]], atol=1e-15
        )

    def test_top_outcome_receives_but_never_donates(self):
        povm = ClickPovm(
            entries=np.array([[0.0, 0.0, 0.0, 0.5, 0.5]]), n_pixels=4, crosstalk_prob=0.0
        )
        out = apply_crosstalk(povm, 0.1).entries
        np.testing.assert_allclose(out, [[0.0, 0.0, 0.0, 0.45, 0.55]], atol=1e-15)

    def test_eps_one_rejected(self):
        with pytest.raises(ParameterError):
            apply_crosstalk(click_povm(4, 3), 1.0)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=5, max_size=5).filter(
            lambda row: sum(row) > 0
        ),
        st.floats(min_value=0.0, max_value=0.5),
    )
    @settings(max_examples=100, deadline=None)
    def test_row_sums_preserved(self, row, eps):
        row = np.asarray(row) / sum(row)
        povm = ClickPovm(entries=row[None, :], n_pixels=4, crosstalk_prob=0.0)
        out = apply_crosstalk(povm, eps).entries
        assert out.sum() == pytest.approx(1.0, abs=1e-12)


class TestDetectionMatrix:
    def test_reference_rows_match_published_table(self):
        entries = reference_detection_matrix(10).entries
        for n in (1, 2, 10):
            np.testing.assert_allclose(entries[n], REFERENCE_TABLE[n], atol=TABLE_ATOL)

    def test_vacuum_row(self):
        entries = reference_detection_matrix(10).entries
        np.testing.assert_array_equal(entries[0], [1, 0, 0, 0, 0])

    def test_rows_stochastic(self):
        entries = detection_matrix(0.31, 4, 0.07, 25).entries
        np.testing.assert_allclose(entries.sum(axis=1), 1.0, atol=1e-10)

    def test_lossless_no_crosstalk_equals_bare_povm(self):
        det = detection_matrix(1.0, 4, 0.0, 12)
        np.testing.assert_array_equal(det.entries, click_povm(4, 12).entries)

    def test_monte_carlo_oracle(self):
        # sample the physical process directly: binomial survival, uniform
        # pixel assignment, per-event crosstalk upgrade
        rng = np.random.default_rng(123)
        t, eps, n_pixels = 0.7, 0.025, 4
        det = detection_matrix(t, n_pixels, eps, 10)
        samples = 1_000_000
        for n in (1, 2, 3, 5, 10):
            survivors = rng.binomial(n, t, samples)
            clicks = np.zeros(samples, dtype=int)
            for count in range(1, n + 1):
                rows = np.nonzero(survivors == count)[0]
                if rows.size == 0:
                    continue
                pixels = rng.integers(0, n_pixels, size=(rows.size, count))
                masks = np.bitwise_or.reduce(1 << pixels, axis=1)
                clicks[rows] = [bin(m).count("1") for m in masks]
            upgrade = (clicks >= 1) & (clicks <= 3) & (rng.random(samples) < eps)
            clicks = clicks + upgrade
            freq = np.bincount(clicks, minlength=n_pixels + 1) / samples
            sigma = np.sqrt(det.entries[n] * (1 - det.entries[n]) / samples)
            assert np.all(np.abs(freq - det.entries[n]) <= 3 * sigma + 1e-9)

    def test_csv_export(self, tmp_path):
        det = reference_detection_matrix(4)
        path = tmp_path / "matrix.csv"
        write_matrix_csv(det, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "n,0,1,2,3,4"
        data = np.array([[float(v) for v in line.split(",")[1:]] for line in lines[1:]])
        np.testing.assert_allclose(data, det.entries, rtol=1e-10)


@given(st.floats(min_value=0.0, max_value=1.0), st.integers(min_value=1, max_value=6))
@settings(max_examples=60, deadline=None)
def test_all_rows_stochastic_property(transmission, n_pixels):
    det = detection_matrix(transmission, n_pixels, 0.02, 12)
    np.testing.assert_allclose(det.entries.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(det.entries >= -1e-12)
