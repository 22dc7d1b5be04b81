import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csi_feedback.augment import (AugmentConfig, split_mag_phase, magnitude_shift,
                                  phase_randomize, augment_dataset)
from csi_feedback.channel import (ArrayDims, Dataset, ScenarioConfig,
                                  generate_dataset, save_dataset, load_dataset)
from csi_feedback.errors import ConfigurationError
from csi_feedback.transnet import circular_shift

TINY = ArrayDims(n_f=8, n_b=4, r_d=4)


class TestSplitMagPhase:
    def test_real_unit(self):
        mag, phase = split_mag_phase(np.array([[1 + 0j]]))
        assert mag[0, 0] == 1.0 and phase[0, 0] == 0.0

    def test_pure_imaginary(self):
        mag, phase = split_mag_phase(np.array([[2j]]))
        assert mag[0, 0] == pytest.approx(2.0)
        assert phase[0, 0] == pytest.approx(np.pi / 2)

    def test_zero_entry_phase_convention(self):
        mag, phase = split_mag_phase(np.array([[0j, -1 + 0j]]))
        assert phase[0, 0] == 0.0
        assert phase[0, 1] == pytest.approx(np.pi)  # (-pi, pi] keeps +pi

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_recombination(self, seed):
        rng = np.random.default_rng(seed)
        h = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        mag, phase = split_mag_phase(h)
        assert np.linalg.norm(mag * np.exp(1j * phase) - h) < 1e-6
        assert np.all(phase > -np.pi) and np.all(phase <= np.pi)


class TestMagnitudeShift:
    def test_identity(self):
        mag = np.abs(np.random.default_rng(0).standard_normal((4, 4)))
        assert np.array_equal(magnitude_shift(mag, 0, 0), mag)

    def test_hand_computed_truncation(self):
        mag = np.array([[1., 2, 3], [4, 5, 6], [7, 8, 9]])
        out = magnitude_shift(mag, 1, 0)
        assert np.array_equal(out, [[4, 5, 6], [7, 8, 9], [0, 0, 0]])

    def test_matches_index_oracle(self):
        rng = np.random.default_rng(1)
        mag = np.abs(rng.standard_normal((4, 4)))
        for i, j in [(-1, 1), (2, -1), (1, 2), (0, -1)]:
            out = magnitude_shift(mag, i, j)
            expected = np.zeros_like(mag)
            for m in range(4):
                for n in range(4):
                    if 0 <= m + i < 4:
                        expected[m, n] = mag[m + i, (n + j) % 4]
            assert np.array_equal(out, expected), (i, j)

    def test_out_of_range_rejected(self):
        mag = np.ones((4, 4))
        with pytest.raises(ValueError):
            magnitude_shift(mag, 3, 0)
        with pytest.raises(ValueError):
            magnitude_shift(mag, 0, -2)

    def test_energy_never_increases(self):
        rng = np.random.default_rng(2)
        mag = np.abs(rng.standard_normal((6, 6)))
        for i in range(-2, 4):
            for j in range(-2, 4):
                shifted = magnitude_shift(mag, i, j)
                assert np.linalg.norm(shifted) <= np.linalg.norm(mag) + 1e-12
                if i == 0:
                    assert np.isclose(np.linalg.norm(shifted), np.linalg.norm(mag))

    def test_zero_delay_shift_is_column_rotation(self):
        rng = np.random.default_rng(3)
        mag = np.abs(rng.standard_normal((4, 4)))
        assert np.array_equal(magnitude_shift(mag, 0, 2), circular_shift(mag, 0, -2))


class TestPhaseRandomize:
    def test_constant_shift_per_row(self):
        rng = np.random.default_rng(4)
        phase = rng.uniform(-np.pi, np.pi, (4, 6))
        out = phase_randomize(phase, np.random.default_rng(0))
        diff = np.mod(out - phase, 2 * np.pi)
        for row in diff:
            assert np.allclose(row, row[0])

    def test_magnitudes_preserved(self):
        rng = np.random.default_rng(5)
        h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        mag, phase = split_mag_phase(h)
        out = mag * np.exp(1j * phase_randomize(phase, np.random.default_rng(1)))
        assert np.abs(np.abs(out) - mag).max() < 1e-6

    def test_pinned_pi_negates(self, monkeypatch):
        class PinnedRng:
            def uniform(self, lo, hi, size):
                return np.full(size, np.pi)

        rng = np.random.default_rng(6)
        h = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        mag, phase = split_mag_phase(h)
        out = mag * np.exp(1j * phase_randomize(phase, PinnedRng()))
        assert np.abs(out + h).max() < 1e-9

    def test_wrap_convention(self):
        out = phase_randomize(np.zeros((8, 2)), np.random.default_rng(7))
        assert np.all(out > -np.pi) and np.all(out <= np.pi)


def _base(n=4, dims=TINY, seed=0):
    return generate_dataset(ScenarioConfig(seed=seed, max_delay_bins=2.0,
                                           num_paths=2), n, dims=dims)


class TestAugmentDataset:
    def _cfg(self, **kw):
        defaults = dict(angular_shift_range=(-1, 1), delay_shift_range=(-1, 1),
                        use_ads=True, use_prs=True, target_size=10, seed=0)
        defaults.update(kw)
        return AugmentConfig(**defaults)

    def test_degenerate_ads_is_repetition(self):
        base = _base(n=4)
        cfg = self._cfg(angular_shift_range=(0, 0), delay_shift_range=(0, 0),
                        use_prs=False, target_size=12)
        out = augment_dataset(base, cfg, TINY)
        assert len(out) == 12
        for rep in range(3):
            assert np.array_equal(out.samples[rep * 4:(rep + 1) * 4], base.samples)

    def test_pool_counting(self):
        # 4 base samples x 3 delay shifts x 7 angular shifts = 84-deep pool;
        # a 84-target draw uses each pool entry exactly once
        dims = ArrayDims(n_f=8, n_b=8, r_d=4)
        base = generate_dataset(ScenarioConfig(seed=0, max_delay_bins=2.0,
                                               num_paths=2), 4, dims=dims)
        cfg = self._cfg(angular_shift_range=(-3, 3), delay_shift_range=(-1, 1),
                        use_prs=False, target_size=84)
        out = augment_dataset(base, cfg, dims)
        assert len(out) == 84
        mags = {np.round(np.abs(s), 6).tobytes() for s in out.samples}
        assert len(mags) == 84  # every (sample, shift) combination distinct

    def test_output_size_exact(self):
        base = _base(n=3)
        for target in (3, 7, 50):
            out = augment_dataset(base, self._cfg(target_size=target), TINY)
            assert len(out) == target

    def test_prs_preserves_magnitudes_when_ads_off(self):
        base = _base(n=2)
        cfg = self._cfg(use_ads=False, target_size=6)
        out = augment_dataset(base, cfg, TINY)
        for q in range(6):
            src = base.samples[q % 2]
            # tolerance scales with magnitude: complex64 storage rounds |h|
            # at the 1e-7 relative level
            err = np.abs(np.abs(out.samples[q]) - np.abs(src))
            assert (err / (1.0 + np.abs(src))).max() < 1e-6

    def test_deterministic(self):
        base = _base(n=3)
        a = augment_dataset(base, self._cfg(target_size=20), TINY)
        b = augment_dataset(base, self._cfg(target_size=20), TINY)
        assert np.array_equal(a.samples, b.samples)

    def test_target_smaller_than_base_rejected(self):
        with pytest.raises(ConfigurationError):
            augment_dataset(_base(n=4), self._cfg(target_size=2), TINY)

    def test_range_outside_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            self._cfg(delay_shift_range=(-3, 3)).validate(TINY)
        with pytest.raises(ConfigurationError):
            self._cfg(angular_shift_range=(-4, 2)).validate(TINY)

    def test_provenance_in_manifest(self, tmp_path):
        base = _base(n=2)
        out = augment_dataset(base, self._cfg(target_size=4), TINY)
        save_dataset(out, tmp_path / "aug")
        back = load_dataset(tmp_path / "aug")
        assert back.augmentation["base_name"] == base.name
        assert back.augmentation["config"]["target_size"] == 4
