"""Phantom generation, leakage model, and dataset persistence."""

import numpy as np
import pytest

from cdtikit.dataset import DatasetManifest, DatasetParams, SplitError, build_dataset
from cdtikit.dti import compute_local_basis, compute_maps, fit_tensors
from cdtikit.metrics import mae, maae, ssim
from cdtikit.phantom import (
    GeometryError,
    LeakageError,
    PhantomGeometry,
    apply_sms_leakage,
    default_protocol,
    generate_phantom,
    slice_groups,
    smooth_alpha_field,
)


@pytest.fixture(scope="module")
def phantom():
    return generate_phantom(0, PhantomGeometry(image_size=32, n_slices=4))


class TestPhantom:
    def test_b0_equals_s0_on_mask(self, phantom):
        b0 = np.abs(phantom.dwi[0])
        np.testing.assert_allclose(b0[phantom.masks], phantom.s0[phantom.masks], rtol=1e-12)

    def test_fit_recovers_ground_truth(self, phantom):
        field = fit_tensors(np.abs(phantom.dwi[:, 0]), phantom.protocol)
        m = phantom.masks[0]
        np.testing.assert_allclose(
            field.components[m], phantom.tensors[0][m], atol=1e-8
        )

    def test_ha_ramp_recovered_via_maps(self, phantom):
        field = fit_tensors(np.abs(phantom.dwi[:, 0]), phantom.protocol)
        basis = compute_local_basis(phantom.masks[0])
        maps = compute_maps(field, basis)
        m = phantom.masks[0] & maps.valid
        geo = phantom.geometry
        ha = maps.ha[m]
        assert m.sum() > 100
        # transmural linear ramp between the prescribed endo/epi angles
        assert ha.max() <= geo.ha_endo + 1.0
        assert ha.min() >= geo.ha_epi - 1.0
        assert ha.max() > 35 and ha.min() < -35

    def test_phase_is_smooth(self, phantom):
        phase = np.angle(phantom.dwi[0, 0])
        m = phantom.masks[0]
        gx, gy = np.gradient(np.unwrap(np.unwrap(phase, axis=0), axis=1))
        assert np.abs(gx[m]).max() < 1.0 and np.abs(gy[m]).max() < 1.0

    def test_tensors_psd_on_mask(self, phantom):
        from cdtikit.dti import TensorField, eig3_symmetric

        field = TensorField(phantom.tensors[1], phantom.masks[1])
        evals, _ = eig3_symmetric(field.matrices())
        assert evals[phantom.masks[1]].min() > 0

    def test_degenerate_geometry_rejected(self):
        with pytest.raises(GeometryError):
            generate_phantom(0, PhantomGeometry(inner_radius=(0.4, 0.4), outer_radius=(0.3, 0.3)))

    def test_deterministic(self):
        a = generate_phantom(5, PhantomGeometry(image_size=32, n_slices=2))
        b = generate_phantom(5, PhantomGeometry(image_size=32, n_slices=2))
        np.testing.assert_array_equal(a.dwi, b.dwi)

    def test_slice_groups_distant(self):
        groups = slice_groups(10, 2)
        assert groups == [(0, 5), (1, 6), (2, 7), (3, 8), (4, 9)]


class TestLeakage:
    def test_identity_at_zero(self):
        rng = np.random.default_rng(0)
        clean = rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))
        pair = apply_sms_leakage(clean, 0.0, 0.0, rng)
        np.testing.assert_array_equal(pair.corrupted, pair.clean)

    def test_constant_mix(self):
        clean = np.stack([np.full((4, 4), 1 + 0j), np.full((4, 4), 2 + 0j)])
        pair = apply_sms_leakage(clean, 0.3, 0.0, np.random.default_rng(0))
        np.testing.assert_allclose(pair.corrupted[0], 1.6)
        np.testing.assert_allclose(pair.corrupted[1], 2.3)

    def test_noise_std(self):
        rng = np.random.default_rng(1)
        clean = np.zeros((2, 256, 256), dtype=complex)
        sigma = 0.05
        pair = apply_sms_leakage(clean, 0.0, sigma, rng)
        for comp in (pair.corrupted.real, pair.corrupted.imag):
            assert abs(comp.std() - sigma) / sigma < 0.05

    def test_linearity_in_clean_input(self):
        rng = np.random.default_rng(2)
        clean = rng.standard_normal((2, 6, 6)) + 1j * rng.standard_normal((2, 6, 6))
        alpha = np.array([[0.0, 0.2], [0.4, 0.0]])
        mixed_then_scaled = 3.0 * apply_sms_leakage(clean, alpha, 0.0, rng).corrupted
        scaled_then_mixed = apply_sms_leakage(3.0 * clean, alpha, 0.0, rng).corrupted
        np.testing.assert_allclose(mixed_then_scaled, scaled_then_mixed, rtol=1e-14)

    def test_leakage_in_complex_domain(self):
        # phases matter: leakage of an out-of-phase slice can reduce magnitude
        a = np.full((1, 1), 1 + 0j)
        b = np.full((1, 1), -1 + 0j)
        pair = apply_sms_leakage(np.stack([a, b]), 0.5, 0.0, np.random.default_rng(0))
        assert abs(pair.corrupted[0, 0, 0]) == pytest.approx(0.5)

    def test_alpha_magnitude_validated(self):
        clean = np.zeros((2, 4, 4), dtype=complex)
        with pytest.raises(LeakageError):
            apply_sms_leakage(clean, 1.0, 0.0, np.random.default_rng(0))

    def test_smooth_alpha_field_range(self):
        f = smooth_alpha_field(np.random.default_rng(3), 32, (0.05, 0.35))
        assert f.min() >= 0.05 - 1e-12 and f.max() <= 0.35 + 1e-12
        gx, gy = np.gradient(f)
        assert max(np.abs(gx).max(), np.abs(gy).max()) < 0.1

    def test_zero_error_pair_under_all_metrics(self):
        phantom = generate_phantom(2, PhantomGeometry(image_size=32, n_slices=2))
        clean = phantom.dwi[:, [0, 1]]
        pair = apply_sms_leakage(clean, 0.0, 0.0, np.random.default_rng(0))
        img_p, img_t = np.abs(pair.corrupted[0, 0]), np.abs(pair.clean[0, 0])
        assert mae(img_p, img_t) == 0.0
        assert ssim(img_p, img_t) == 1.0
        assert maae(np.zeros((4, 4)), np.zeros((4, 4))) == 0.0


def small_params(tmp, n_hearts=4, seed=0):
    return DatasetParams(
        n_hearts=n_hearts,
        geometry=PhantomGeometry(image_size=32, n_slices=4),
        n_directions=6,
        split_fractions=(0.5, 0.25, 0.25),
        seed=seed,
    )


class TestDataset:
    def test_build_and_reload(self, tmp_path):
        params = small_params(tmp_path)
        manifest = build_dataset(tmp_path / "ds", params)
        again = DatasetManifest.load(tmp_path / "ds")
        assert again.manifest == manifest.manifest
        groups = again.groups()
        assert len(groups) == 4 * 2  # 4 hearts x 2 slice groups
        data = again.load_group(groups[0])
        k = 7  # b0 + 6 directions
        assert data["corrupted"].shape == (k, 2, 32, 32)
        assert data["clean"].shape == (k, 2, 32, 32)
        assert data["mask"].dtype == bool
        assert data["tensors"].shape == (2, 32, 32, 6)

    def test_hearts_do_not_straddle_splits(self, tmp_path):
        manifest = build_dataset(tmp_path / "ds", small_params(tmp_path))
        train = set(manifest.hearts("train"))
        val = set(manifest.hearts("val"))
        test = set(manifest.hearts("test"))
        assert train and val and test
        assert not (train & val) and not (train & test) and not (val & test)

    def test_byte_identical_regeneration(self, tmp_path):
        params = small_params(tmp_path, seed=9)
        build_dataset(tmp_path / "a", params)
        build_dataset(tmp_path / "b", params)
        files_a = sorted((tmp_path / "a").rglob("*"))
        files_b = sorted((tmp_path / "b").rglob("*"))
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            if fa.is_file():
                assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_different_seed_differs(self, tmp_path):
        build_dataset(tmp_path / "a", small_params(tmp_path, seed=1))
        build_dataset(tmp_path / "b", small_params(tmp_path, seed=2))
        a = (tmp_path / "a/groups/h00_g00_corrupted.cdt").read_bytes()
        b = (tmp_path / "b/groups/h00_g00_corrupted.cdt").read_bytes()
        assert a != b

    def test_too_few_hearts_rejected(self, tmp_path):
        with pytest.raises(SplitError):
            build_dataset(tmp_path / "ds", small_params(tmp_path, n_hearts=2))

    def test_corruption_actually_corrupts(self, tmp_path):
        manifest = build_dataset(tmp_path / "ds", small_params(tmp_path))
        data = manifest.load_group(manifest.groups()[0])
        assert mae(data["corrupted"][0, 0], data["clean"][0, 0]) > 1e-4
