import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import osteoforge as of
from osteoforge.errors import GeometryMismatchError, ValidationError
from oracles import bfs_components, brute_force_match, same_partition


def _mask(shape, coords):
    m = np.zeros(shape, dtype=bool)
    for c in coords:
        m[c] = True
    return m


class TestConnectedComponents:
    def test_single_voxel(self):
        cs = of.connected_components(_mask((4, 4, 4), [(1, 2, 3)]))
        assert len(cs) == 1
        comp = cs.components[0]
        assert comp.id == 1
        assert comp.size == 1
        assert comp.bbox == (1, 2, 3, 1, 2, 3)
        assert comp.centroid == (1.0, 2.0, 3.0)

    def test_corner_touch_merges_at_26_splits_at_6(self):
        m = _mask((4, 4, 4), [(1, 1, 1), (2, 2, 2)])
        assert len(of.connected_components(m, connectivity=26)) == 1
        assert len(of.connected_components(m, connectivity=6)) == 2

    def test_edge_touch_merges_at_18_splits_at_6(self):
        m = _mask((4, 4, 4), [(1, 1, 1), (2, 2, 1)])
        assert len(of.connected_components(m, connectivity=18)) == 1
        assert len(of.connected_components(m, connectivity=6)) == 2

    def test_ids_follow_first_voxel_order(self):
        # component containing the lexicographically smallest (x, y, z) gets id 1
        m = _mask((5, 5, 5), [(4, 4, 4), (0, 0, 0), (0, 0, 1), (2, 2, 2)])
        cs = of.connected_components(m, connectivity=6)
        assert len(cs) == 3
        assert cs.labels[0, 0, 0] == 1
        assert cs.labels[2, 2, 2] == 2
        assert cs.labels[4, 4, 4] == 3
        assert cs.components[0].size == 2

    def test_sizes_sum_to_mask(self):
        rng = np.random.default_rng(5)
        m = np.asfortranarray(rng.random((12, 12, 12)) < 0.3)
        cs = of.connected_components(m)
        assert sum(c.size for c in cs.components) == int(m.sum())
        assert np.array_equal(cs.foreground, m)

    def test_empty_mask(self):
        cs = of.connected_components(np.zeros((3, 3, 3), dtype=bool))
        assert len(cs) == 0
        assert not cs.labels.any()

    @pytest.mark.parametrize("connectivity", [6, 18, 26])
    def test_matches_bfs_oracle(self, connectivity):
        rng = np.random.default_rng(connectivity)
        for _ in range(10):
            m = np.asfortranarray(rng.random((8, 8, 8)) < 0.35)
            ours = of.connected_components(m, connectivity=connectivity).labels
            ref = bfs_components(m, connectivity)
            assert same_partition(ours, ref, m)

    def test_bad_connectivity_rejected(self):
        with pytest.raises(ValidationError):
            of.connected_components(np.zeros((3, 3, 3), bool), connectivity=4)

    def test_non_3d_rejected(self):
        with pytest.raises(ValidationError):
            of.connected_components(np.zeros((3, 3), dtype=bool))

    @given(hnp.arrays(bool, (6, 6, 6)))
    @settings(max_examples=40, deadline=None)
    def test_transpose_invariance(self, m):
        m = np.asfortranarray(m)
        a = len(of.connected_components(m))
        b = len(of.connected_components(np.asfortranarray(m.transpose(2, 0, 1))))
        assert a == b


class TestMatchDetections:
    def _sets(self, gt_coords, pred_coords, shape=(8, 8, 8)):
        gt = of.connected_components(_mask(shape, gt_coords))
        pred = of.connected_components(_mask(shape, pred_coords))
        return gt, pred

    def test_perfect_match(self):
        gt, pred = self._sets([(1, 1, 1)], [(1, 1, 1)])
        r = of.match_detections(gt, pred)
        assert (r.tp, r.fp, r.fn) == (1, 0, 0)
        assert r.precision == 1.0
        assert r.recall == 1.0
        assert r.matches == ((1, (1,)),)

    def test_one_prediction_covering_two_lesions(self):
        gt, pred = self._sets(
            [(1, 1, 1), (5, 5, 5)],
            [(x, y, z) for x in range(8) for y in range(8) for z in range(8)])
        r = of.match_detections(gt, pred)
        assert (r.tp, r.fp, r.fn) == (2, 0, 0)
        assert r.matches == ((1, (1,)), (2, (1,)))

    def test_empty_predictions(self):
        gt, pred = self._sets([(0, 0, 0), (2, 2, 2), (4, 4, 4), (6, 6, 6),
                               (1, 6, 1)], [])
        r = of.match_detections(gt, pred)
        assert (r.tp, r.fp, r.fn) == (0, 0, 5)
        assert r.precision is None
        assert r.recall == 0.0
        assert all(preds == () for _, preds in r.matches)

    def test_spurious_prediction(self):
        gt, pred = self._sets([(1, 1, 1)], [(1, 1, 1), (6, 6, 6)])
        r = of.match_detections(gt, pred)
        assert (r.tp, r.fp, r.fn) == (1, 1, 0)
        assert r.precision == pytest.approx(0.5)

    def test_empty_ground_truth(self):
        gt, pred = self._sets([], [(1, 1, 1)])
        r = of.match_detections(gt, pred)
        assert (r.tp, r.fp, r.fn) == (0, 1, 0)
        assert r.recall is None
        assert r.precision == 0.0

    def test_min_overlap_fraction_filters_weak_hits(self):
        shape = (8, 8, 8)
        gt_coords = [(x, 1, 1) for x in range(6)]
        gt = of.connected_components(_mask(shape, gt_coords))
        pred = of.connected_components(_mask(shape, [(0, 1, 1)]))
        loose = of.match_detections(gt, pred, min_overlap_fraction=0.0)
        strict = of.match_detections(gt, pred, min_overlap_fraction=0.5)
        assert loose.tp == 1
        assert strict.tp == 0
        assert strict.fp == 1

    def test_fraction_bounds_checked(self):
        gt, pred = self._sets([(1, 1, 1)], [(1, 1, 1)])
        for bad in (-0.1, 1.5):
            with pytest.raises(ValidationError):
                of.match_detections(gt, pred, min_overlap_fraction=bad)

    def test_shape_mismatch_rejected(self):
        gt = of.connected_components(np.zeros((4, 4, 4), bool))
        pred = of.connected_components(np.zeros((5, 5, 5), bool))
        with pytest.raises(GeometryMismatchError):
            of.match_detections(gt, pred)

    def test_series_id_carried(self):
        gt, pred = self._sets([(1, 1, 1)], [(1, 1, 1)])
        assert of.match_detections(gt, pred, series_id="s7").series_id == "s7"

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        shape = (10, 10, 10)
        gt_m = np.asfortranarray(rng.random(shape) < 0.15)
        pred_m = np.asfortranarray(rng.random(shape) < 0.15)
        frac = float(rng.choice([0.0, 0.25, 0.5]))
        gt = of.connected_components(gt_m)
        pred = of.connected_components(pred_m)
        r = of.match_detections(gt, pred, min_overlap_fraction=frac)
        tp, fp, fn, matches = brute_force_match(gt.labels, pred.labels, frac)
        assert (r.tp, r.fp, r.fn) == (tp, fp, fn)
        assert [(g, set(p)) for g, p in r.matches] == \
            [(g, set(p)) for g, p in matches]

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_adding_a_prediction_never_hurts_recall(self, seed):
        rng = np.random.default_rng(seed)
        shape = (8, 8, 8)
        gt = of.connected_components(np.asfortranarray(rng.random(shape) < 0.12))
        base_m = np.asfortranarray(rng.random(shape) < 0.08)
        extra_m = base_m | np.asfortranarray(rng.random(shape) < 0.08)
        base = of.match_detections(gt, of.connected_components(base_m))
        extra = of.match_detections(gt, of.connected_components(extra_m))
        assert extra.tp >= base.tp
        assert extra.fn <= base.fn


class TestDetectionReport:
    def test_from_counts_derives_ratios(self):
        r = of.DetectionReport.from_counts(n_gt=4, n_pred=5, tp=3, fp=2, fn=1,
                                           matches=((1, (1,)),))
        assert r.precision == pytest.approx(3 / 5)
        assert r.recall == pytest.approx(3 / 4)

    def test_zero_denominators_give_none(self):
        r = of.DetectionReport.from_counts(n_gt=0, n_pred=0, tp=0, fp=0, fn=0,
                                           matches=())
        assert r.precision is None
        assert r.recall is None

    def test_negative_counts_rejected(self):
        with pytest.raises(ValidationError):
            of.DetectionReport.from_counts(n_gt=1, n_pred=1, tp=-1, fp=0, fn=0,
                                           matches=())

    def test_inconsistent_counts_rejected(self):
        with pytest.raises(ValidationError):
            of.DetectionReport.from_counts(n_gt=3, n_pred=1, tp=1, fp=0, fn=1,
                                           matches=())

    def test_report_json_round_trip(self, tmp_path):
        gt = of.connected_components(_mask((6, 6, 6), [(1, 1, 1), (4, 4, 4)]))
        pred = of.connected_components(_mask((6, 6, 6), [(1, 1, 1)]))
        r = of.match_detections(gt, pred, series_id="case3")
        path = tmp_path / "report.json"
        of.write_report(r, path)
        back = of.read_report(path)
        assert back == r

    def test_undefined_ratio_serialized_as_null(self, tmp_path):
        gt = of.connected_components(_mask((4, 4, 4), [(1, 1, 1)]))
        pred = of.connected_components(np.zeros((4, 4, 4), bool))
        r = of.match_detections(gt, pred)
        path = tmp_path / "report.json"
        of.write_report(r, path)
        doc = json.loads(path.read_text())
        assert doc["precision"] is None
        assert doc["recall"] == 0.0
        assert doc["matches"] == [{"gt": 1, "preds": []}]
        assert of.read_report(path).precision is None

    def test_read_report_missing_key(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text(json.dumps({"tp": 1}))
        with pytest.raises(ValidationError):
            of.read_report(path)


class TestLesionExtraction:
    def test_only_lesion_code_counts(self):
        dims = (6, 6, 6)
        data = np.zeros(dims, dtype=np.uint8, order="F")
        data[1, 1, 1] = of.BODY
        data[2, 2, 2] = of.SKELETON
        data[4, 4, 4] = of.LESION
        vol = of.LabelVolume(dims, (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), data)
        cs = of.connected_components(of.extract_lesion_components(vol))
        assert len(cs) == 1
        assert cs.components[0].centroid == (4.0, 4.0, 4.0)

    def test_no_lesions_gives_empty_mask(self):
        dims = (4, 4, 4)
        data = np.full(dims, of.BODY, dtype=np.uint8, order="F")
        vol = of.LabelVolume(dims, (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), data)
        assert not of.extract_lesion_components(vol).any()


class TestBaselinePredict:
    def _volume(self, data):
        return of.Volume3D(data.shape, (1.0, 1.0, 1.0), (0.0, 0.0, 0.0),
                           np.asfortranarray(data.astype(np.int16)))

    def test_finds_dense_and_lucent_blobs(self):
        dims = (24, 24, 8)
        data = np.full(dims, 300, dtype=np.int16)  # normal bone everywhere
        data[4:9, 4:9, 2:6] = 700    # dense lesion
        data[14:19, 14:19, 2:6] = 20  # lucent lesion
        skeleton = np.ones(dims, dtype=bool)
        pred = of.baseline_predict(self._volume(data), skeleton)
        assert len(of.connected_components(pred)) == 2
        assert pred[6, 6, 3]
        assert pred[16, 16, 3]

    def test_normal_bone_is_not_flagged(self):
        dims = (12, 12, 6)
        data = np.full(dims, 300, dtype=np.int16)
        pred = of.baseline_predict(self._volume(data), np.ones(dims, bool))
        assert not pred.any()

    def test_outside_skeleton_ignored(self):
        dims = (12, 12, 6)
        data = np.full(dims, 900, dtype=np.int16)
        pred = of.baseline_predict(self._volume(data), np.zeros(dims, bool))
        assert not pred.any()

    def test_small_blobs_dropped(self):
        dims = (16, 16, 8)
        data = np.full(dims, 300, dtype=np.int16)
        data[4:6, 4:6, 3] = 900  # survives opening as < 10 voxels? it does not
        data[10, 10, 3] = 900
        pred = of.baseline_predict(self._volume(data), np.ones(dims, bool))
        assert not pred.any()

    def test_shape_mismatch_rejected(self):
        dims = (8, 8, 4)
        data = np.zeros(dims, dtype=np.int16)
        with pytest.raises(GeometryMismatchError):
            of.baseline_predict(self._volume(data), np.zeros((8, 8, 5), bool))
