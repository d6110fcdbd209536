import numpy as np
import pytest

import osteoforge as of
from osteoforge.errors import ValidationError
from oracles import analytic_sphere


def _spec(lesions, **overrides):
    base = dict(
        dims=(64, 64, 20),
        spacing=(1.0, 1.0, 2.0),
        body_center_mm=(32.0, 32.0, 20.0),
        body_semi_axes_mm=(28.0, 28.0, 60.0),
        bone_center_mm=(32.0, 32.0),
        bone_radius_mm=(14.0, 14.0),
        noise_sigma_hu=0.0,
        rng_seed=0,
    )
    base.update(overrides)
    return of.PhantomSpec(lesions=tuple(lesions), **base)


def _one_lesion(kind="lytic", radius=5.0, center=(32.0, 32.0, 20.0), **kw):
    return of.LesionSpec(lesion_id="L01", center_mm=center, radius_mm=radius,
                         kind=kind, **kw)


class TestSphereGeometry:
    def test_voxel_count_near_analytic_volume(self):
        spec = _spec([_one_lesion(radius=5.0)], spacing=(1.0, 1.0, 1.0),
                     dims=(64, 64, 40), body_center_mm=(32.0, 32.0, 20.0))
        result = of.generate_phantom(spec)
        count = int(result.lesion_masks[0].sum())
        expected = 4.0 / 3.0 * np.pi * 5.0**3
        assert abs(count - expected) / expected < 0.08

    def test_mask_matches_analytic_membership(self):
        spec = _spec([_one_lesion(radius=4.0)])
        result = of.generate_phantom(spec)
        ref = analytic_sphere(spec.dims, spec.spacing, (32.0, 32.0, 20.0), 4.0)
        assert np.array_equal(result.lesion_masks[0], ref)

    def test_anisotropic_spacing_respected(self):
        # 2 mm slices: a 3 mm sphere at z-center spans exactly 3 slices
        spec = _spec([_one_lesion(radius=3.0)])
        result = of.generate_phantom(spec)
        zs = np.unique(np.nonzero(result.lesion_masks[0])[2])
        assert zs.tolist() == [9, 10, 11]


class TestSynthesizedMeasurements:
    def test_measurement_on_equator_slice(self):
        spec = _spec([_one_lesion(radius=5.0)])
        result = of.generate_phantom(spec)
        (m,) = result.recist
        assert m.lesion_id == "L01"
        assert m.slice_index == 10  # 20 mm / 2 mm spacing

    def test_axes_cross_at_center_with_full_diameter(self):
        spec = _spec([_one_lesion(radius=5.0)], spacing=(1.0, 1.0, 1.0),
                     dims=(64, 64, 40), body_center_mm=(32.0, 32.0, 20.0))
        result = of.generate_phantom(spec)
        (m,) = result.recist
        (lx0, ly0), (lx1, ly1) = m.long_axis
        (sx0, sy0), (sx1, sy1) = m.short_axis
        assert (lx0, lx1) == (27.0, 37.0)
        assert ly0 == ly1 == 32.0
        assert sx0 == sx1 == 32.0
        assert (sy0, sy1) == (27.0, 37.0)

    def test_off_slice_center_uses_chord_radius(self):
        # center between slices: in-plane radius shrinks to sqrt(r^2 - dz^2)
        spec = _spec([_one_lesion(radius=4.0, center=(32.0, 32.0, 21.0))])
        result = of.generate_phantom(spec)
        (m,) = result.recist
        # nearest slice plane z=10 -> 20 mm, dz = 1 mm
        (lx0, _), (lx1, _) = m.long_axis
        chord = np.sqrt(4.0**2 - 1.0**2)
        assert lx1 - lx0 == pytest.approx(2 * chord)

    def test_seed_geometry_from_synthesized_measurement(self):
        spec = _spec([_one_lesion(radius=5.0)])
        result = of.generate_phantom(spec)
        g = of.seed_geometry(result.recist[0], spec.dims[:2])
        x0, y0, x1, y1 = g.bbox
        assert x0 < 32 < x1
        assert y0 < 32 < y1


class TestTissueValues:
    def test_exact_hu_without_noise(self):
        lesions = [
            of.LesionSpec("LY", (20.0, 32.0, 20.0), 3.0, kind="lytic"),
            of.LesionSpec("BL", (44.0, 32.0, 20.0), 3.0, kind="blastic"),
        ]
        spec = _spec(lesions, bone_radius_mm=(20.0, 20.0))
        result = of.generate_phantom(spec)
        d = result.volume.data
        assert d[0, 0, 0] == -1000
        assert d[32, 6, 10] == 40     # soft tissue inside body, outside bone
        assert d[32, 20, 10] == 300   # normal bone
        assert d[20, 32, 10] == 300 - 280
        assert d[44, 32, 10] == 300 + 500

    def test_mixed_lesion_has_shell_and_core(self):
        spec = _spec([_one_lesion(kind="mixed", radius=5.0)])
        result = of.generate_phantom(spec)
        d = result.volume.data
        assert d[32, 32, 10] == 300 - 280          # lytic core
        assert d[32 + 4, 32, 10] == 300 + 280      # blastic shell
        mask = result.lesion_masks[0]
        core = d[mask] == 20
        shell = d[mask] == 580
        assert core.any() and shell.any()
        assert (core | shell).all()

    def test_custom_hu_offset(self):
        spec = _spec([_one_lesion(kind="blastic", radius=3.0, hu_offset=450)])
        result = of.generate_phantom(spec)
        assert result.volume.data[32, 32, 10] == 750

    def test_labels_cover_tissues(self):
        spec = _spec([_one_lesion(radius=4.0)])
        result = of.generate_phantom(spec)
        lab = result.gt_labels.data
        assert lab[0, 0, 0] == of.BACKGROUND
        assert lab[32, 6, 10] == of.BODY
        assert lab[32, 20, 10] == of.SKELETON
        assert lab[32, 32, 10] == of.LESION
        assert np.array_equal(lab == of.LESION, result.lesion_masks[0])

    def test_noise_is_seeded_and_bounded(self):
        spec_a = _spec([_one_lesion()], noise_sigma_hu=3.0, rng_seed=7)
        spec_b = _spec([_one_lesion()], noise_sigma_hu=3.0, rng_seed=7)
        spec_c = _spec([_one_lesion()], noise_sigma_hu=3.0, rng_seed=8)
        a = of.generate_phantom(spec_a).volume.data
        b = of.generate_phantom(spec_b).volume.data
        c = of.generate_phantom(spec_c).volume.data
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert abs(int(a[0, 0, 0]) + 1000) < 20  # still close to air


class TestSpecValidation:
    def test_lesion_outside_bone_rejected_by_name(self):
        spec = _spec([_one_lesion(center=(10.0, 10.0, 20.0))])
        with pytest.raises(ValidationError, match="L01"):
            of.generate_phantom(spec)

    def test_duplicate_lesion_ids_rejected(self):
        with pytest.raises(ValidationError):
            _spec([_one_lesion(), _one_lesion()])

    def test_kind_and_radius_validated(self):
        with pytest.raises(ValidationError):
            of.LesionSpec("X", (0, 0, 0), 3.0, kind="sclerotic")
        with pytest.raises(ValidationError):
            of.LesionSpec("X", (0, 0, 0), -1.0)

    def test_offset_sign_must_match_kind(self):
        with pytest.raises(ValidationError):
            of.LesionSpec("X", (0, 0, 0), 3.0, kind="lytic", hu_offset=100)
        with pytest.raises(ValidationError):
            of.LesionSpec("X", (0, 0, 0), 3.0, kind="blastic", hu_offset=-100)

    def test_tissue_ordering_validated(self):
        with pytest.raises(ValidationError):
            _spec([], body_hu=400, bone_hu=300)

    def test_json_round_trip(self, tmp_path):
        spec = _spec([_one_lesion(kind="mixed")], noise_sigma_hu=2.0, rng_seed=3)
        path = tmp_path / "spec.json"
        spec.to_json(path)
        assert of.PhantomSpec.from_json(path) == spec

    def test_from_json_rejects_junk(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"dims": "wide"}')
        with pytest.raises(ValidationError):
            of.PhantomSpec.from_json(path)


class TestDefaultPhantom:
    def test_requested_lesion_count(self):
        spec = of.default_phantom_spec(num_lesions=7)
        assert len(spec.lesions) == 7
        result = of.generate_phantom(spec)
        assert len(result.recist) == 7
        cs = of.connected_components(result.gt_labels.data == of.LESION)
        assert len(cs) == 7

    def test_kinds_are_mixed(self):
        spec = of.default_phantom_spec(num_lesions=6)
        assert {l.kind for l in spec.lesions} == set(of.LESION_KINDS)

    def test_too_many_lesions_rejected(self):
        with pytest.raises(ValidationError):
            of.default_phantom_spec(num_lesions=13)


class TestPerturbPredictions:
    def _masks(self, n=5):
        spec = of.default_phantom_spec(num_lesions=n, noise_sigma_hu=0.0)
        return list(of.generate_phantom(spec).lesion_masks)

    def test_perfect_is_union(self):
        masks = self._masks(3)
        pred = of.perturb_predictions(masks, mode="perfect")
        union = np.zeros_like(pred)
        for m in masks:
            union |= m
        assert np.array_equal(pred, union)

    def test_dilate_grows_erode_shrinks(self):
        masks = self._masks(3)
        base = of.perturb_predictions(masks, mode="perfect")
        grown = of.perturb_predictions(masks, mode="dilate")
        shrunk = of.perturb_predictions(masks, mode="erode")
        assert grown.sum() > base.sum()
        assert shrunk.sum() < base.sum()
        assert (base | grown == grown).all()
        assert (shrunk | base == base).all()

    def test_drop_removes_k_whole_lesions(self):
        masks = self._masks(5)
        pred = of.perturb_predictions(masks, mode="drop", k=2, rng_seed=1)
        gt = of.connected_components(
            of.perturb_predictions(masks, mode="perfect"))
        r = of.match_detections(gt, of.connected_components(pred))
        assert (r.tp, r.fp, r.fn) == (3, 0, 2)

    def test_drop_is_seeded(self):
        masks = self._masks(5)
        a = of.perturb_predictions(masks, mode="drop", k=2, rng_seed=4)
        b = of.perturb_predictions(masks, mode="drop", k=2, rng_seed=4)
        assert np.array_equal(a, b)

    def test_drop_more_than_available_rejected(self):
        with pytest.raises(ValidationError):
            of.perturb_predictions(self._masks(3), mode="drop", k=4)

    def test_add_spurious_adds_exactly_k_false_positives(self):
        masks = self._masks(4)
        pred = of.perturb_predictions(masks, mode="add_spurious", k=3,
                                      rng_seed=2)
        gt = of.connected_components(
            of.perturb_predictions(masks, mode="perfect"))
        r = of.match_detections(gt, of.connected_components(pred))
        assert (r.tp, r.fp, r.fn) == (4, 3, 0)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValidationError):
            of.perturb_predictions(self._masks(2), mode="shuffle")

    def test_negative_k_rejected(self):
        with pytest.raises(ValidationError):
            of.perturb_predictions(self._masks(2), mode="drop", k=-1)


class TestDeterminism:
    def test_same_spec_same_bits(self):
        spec = of.default_phantom_spec(num_lesions=4, rng_seed=11,
                                       noise_sigma_hu=3.0)
        a = of.generate_phantom(spec)
        b = of.generate_phantom(spec)
        assert np.array_equal(a.volume.data, b.volume.data)
        assert np.array_equal(a.gt_labels.data, b.gt_labels.data)
        assert a.recist == b.recist
