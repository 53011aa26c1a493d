import itertools

import numpy as np
import pytest

from autolabel3d.core import (Annotation, Box2D, Box3D, CameraIntrinsics,
                              Frame, InvalidArgument, Provenance, Pseudolabel,
                              Sequence, FORWARD)
from autolabel3d.metrics import (ASSOC_IOU2D, DEFAULT_RECALL_GRID, amota_amotp,
                                 clear_mot, evaluate, hungarian, idf1)

K = CameraIntrinsics(fx=721.54, fy=721.54, cx=609.56, cy=172.85,
                     width=1242, height=375)
BOX2D = Box2D(cx=100, cy=100, w=40, h=30)


def box3d(center):
    return Box3D(center=tuple(center), dims=(4.0, 1.8, 1.5), yaw=0.0,
                 direction="towards")


def make_seq(tracks, n_frames):
    """tracks: {track_id: {frame: center}}"""
    frames = []
    for fi in range(n_frames):
        anns = tuple(
            Annotation(frame_index=fi, track_id=tid, box2d=BOX2D,
                       box3d=box3d(traj[fi]), occlusion_level=0)
            for tid, traj in sorted(tracks.items()) if fi in traj)
        frames.append(Frame(frame_index=fi, ego_pose=np.eye(3, 4),
                            annotations=anns))
    return Sequence(id="m", intrinsics=K, frames=tuple(frames),
                    frame_rate=10.0)


def pl(tid, fi, center, conf=1.0, box2d=BOX2D):
    return Pseudolabel(frame_index=fi, track_id=tid, box2d=box2d,
                       box3d=box3d(center), confidence=conf,
                       provenance=Provenance(direction=FORWARD,
                                             source_frame_index=fi))


def perfect_preds(seq, conf=1.0):
    return [pl(a.track_id, f.frame_index, a.box3d.center, conf)
            for f in seq.frames for a in f.annotations]


class TestHungarian:
    def test_known_3x3(self):
        cost = np.array([[4.0, 1.0, 3.0],
                         [2.0, 0.0, 5.0],
                         [3.0, 2.0, 2.0]])
        a = hungarian(cost)
        assert sum(cost[i, j] for i, j in a.items()) == 5.0

    def test_forbidden_pairs_skipped(self):
        cost = np.array([[np.inf, 1.0],
                         [np.inf, np.inf]])
        assert hungarian(cost) == {0: 1}

    def test_rectangular(self):
        cost = np.array([[1.0, 2.0, 0.5]])
        assert hungarian(cost) == {0: 2}

    def test_empty(self):
        assert hungarian(np.zeros((0, 0))) == {}

    def test_nan_rejected(self):
        with pytest.raises(InvalidArgument):
            hungarian(np.array([[np.nan]]))

    def test_brute_force_property(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n = int(rng.integers(2, 8))
            cost = rng.uniform(0, 10, size=(n, n))
            cost[rng.random(size=(n, n)) < 0.3] = np.inf

            best_card, best_cost = -1, np.inf
            for perm in itertools.permutations(range(n)):
                card, total = 0, 0.0
                for i, j in enumerate(perm):
                    if np.isfinite(cost[i, j]):
                        card += 1
                        total += cost[i, j]
                if card > best_card or (card == best_card and total < best_cost):
                    best_card, best_cost = card, total

            got = hungarian(cost)
            got_cost = sum(cost[i, j] for i, j in got.items())
            assert len(got) == best_card
            assert got_cost == pytest.approx(best_cost, abs=1e-9)


class TestClearMot:
    def test_perfect_tracking(self):
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(5)}}, 5)
        mota, motp, counts, _ = clear_mot(seq, perfect_preds(seq))
        assert mota == 1.0 and motp == 0.0
        assert counts == counts.__class__(tp=5, fp=0, fn=0, idsw=0, gt_total=5)

    def test_mota_point_six_fixture(self):
        # 2 GT tracks x 5 frames; pred misses track 1 on frames 0-1 (2 FN),
        # switches identity on track 1 at frame 4 (1 IDSW), and adds one
        # far spurious box (1 FP): MOTA = 1 - 4/10
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(5)},
                        1: {f: (5, 0, 10 + f) for f in range(5)}}, 5)
        preds = [pl(100, f, (0, 0, 10 + f)) for f in range(5)]
        preds += [pl(10, f, (5, 0, 10 + f)) for f in (2, 3)]
        preds += [pl(11, 4, (5, 0, 14))]
        preds += [pl(99, 0, (500, 0, 500))]
        mota, motp, counts, _ = clear_mot(seq, preds)
        assert counts.fn == 2 and counts.fp == 1 and counts.idsw == 1
        assert mota == pytest.approx(0.6, abs=1e-12)
        assert motp == pytest.approx(0.0, abs=1e-12)

    def test_motp_is_mean_matched_distance(self):
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(5)}}, 5)
        preds = [pl(0, f, (1.0, 0, 10 + f)) for f in range(5)]
        mota, motp, counts, dist_sum = clear_mot(seq, preds)
        assert mota == 1.0
        assert motp == pytest.approx(1.0, abs=1e-12)
        assert dist_sum == pytest.approx(5.0, abs=1e-12)

    def test_beyond_threshold_counts_fp_and_fn(self):
        seq = make_seq({0: {0: (0, 0, 10)}}, 1)
        preds = [pl(0, 0, (5.0, 0, 10))]
        mota, _, counts, _ = clear_mot(seq, preds, dist_threshold=2.0)
        assert counts.fp == 1 and counts.fn == 1 and counts.tp == 0
        assert mota == -1.0

    def test_carry_over_prevents_flip_flop_switch(self):
        # two GT tracks crossing paths: the carried-over match survives as
        # long as it stays within the threshold, so no spurious switches
        seq = make_seq({0: {f: (0.0 + 0.1 * f, 0, 10) for f in range(5)},
                        1: {f: (0.5 - 0.1 * f, 0, 10) for f in range(5)}}, 5)
        preds = [pl(20, f, (0.0 + 0.1 * f, 0, 10)) for f in range(5)]
        preds += [pl(21, f, (0.5 - 0.1 * f, 0, 10)) for f in range(5)]
        _, _, counts, _ = clear_mot(seq, preds)
        assert counts.idsw == 0 and counts.tp == 10

    def test_relabel_invariance(self):
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(4)},
                        1: {f: (6, 0, 10 + f) for f in range(4)}}, 4)
        preds = perfect_preds(seq)
        renamed = [pl(p.track_id + 1000, p.frame_index, p.box3d.center,
                      p.confidence) for p in preds]
        a = clear_mot(seq, preds)
        b = clear_mot(seq, renamed)
        assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2]

    def test_duplicate_prediction_rejected(self):
        seq = make_seq({0: {0: (0, 0, 10)}}, 1)
        preds = [pl(0, 0, (0, 0, 10)), pl(0, 0, (1, 0, 10))]
        with pytest.raises(InvalidArgument):
            clear_mot(seq, preds)

    def test_iou2d_association(self):
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(3)}}, 3)
        exact = perfect_preds(seq)
        mota, motp, _, _ = clear_mot(seq, exact, dist_threshold=0.5,
                                     association=ASSOC_IOU2D)
        assert mota == 1.0 and motp == 0.0
        shifted = [pl(0, p.frame_index, p.box3d.center,
                      box2d=Box2D(cx=1000, cy=300, w=40, h=30))
                   for p in exact]
        mota, _, counts, _ = clear_mot(seq, shifted, dist_threshold=0.5,
                                       association=ASSOC_IOU2D)
        assert counts.tp == 0

    def test_unknown_association(self):
        seq = make_seq({0: {0: (0, 0, 10)}}, 1)
        with pytest.raises(InvalidArgument):
            clear_mot(seq, [], association="chamfer")


class TestIdf1:
    def test_perfect(self):
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(6)},
                        1: {f: (6, 0, 10 + f) for f in range(6)}}, 6)
        assert idf1(seq, perfect_preds(seq)) == 1.0

    def test_two_thirds_fixture(self):
        # 10 GT frames, 5 covered by one consistent id:
        # IDTP=5, IDFN=5, IDFP=0 -> 2*5 / (2*5 + 5) = 2/3
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(10)}}, 10)
        preds = [pl(7, f, (0, 0, 10 + f)) for f in range(5)]
        assert idf1(seq, preds) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_identity_split_penalized(self):
        # full coverage but identity changes halfway: the global match can
        # only credit one of the two pred ids
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(10)}}, 10)
        preds = [pl(1, f, (0, 0, 10 + f)) for f in range(5)]
        preds += [pl(2, f, (0, 0, 10 + f)) for f in range(5, 10)]
        # IDTP=5, IDFN=5, IDFP=5 -> 10/20
        assert idf1(seq, preds) == pytest.approx(0.5, abs=1e-12)

    def test_empty_both(self):
        seq = make_seq({}, 3)
        assert idf1(seq, []) == 1.0

    def test_no_preds(self):
        seq = make_seq({0: {0: (0, 0, 10)}}, 1)
        assert idf1(seq, []) == 0.0


class TestAmota:
    def test_perfect(self):
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(10)}}, 10)
        amota, amotp, points = amota_amotp(seq, perfect_preds(seq))
        assert amota == 1.0
        assert amotp == 0.0
        assert len(points) == len(DEFAULT_RECALL_GRID)
        assert all(p.achievable for p in points)

    def test_half_coverage_fixture(self):
        # 20 GT boxes, 10 covered perfectly: recalls up to 0.5 achievable
        # with MOTAR 1, the rest score 0 -> AMOTA = 0.5
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(10)},
                        1: {f: (6, 0, 10 + f) for f in range(10)}}, 10)
        preds = [pl(0, f, (0, 0, 10 + f)) for f in range(10)]
        amota, amotp, points = amota_amotp(seq, preds)
        assert amota == pytest.approx(0.5, abs=1e-12)
        assert amotp == pytest.approx(0.0, abs=1e-12)
        for p in points:
            assert p.achievable == (p.recall <= 0.5)
            assert p.motar == (1.0 if p.achievable else 0.0)

    def test_single_fp_lowers_low_recall_motar(self):
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(10)},
                        1: {f: (6, 0, 10 + f) for f in range(10)}}, 10)
        clean = perfect_preds(seq)
        dirty = clean + [pl(99, 0, (500, 0, 500), conf=1.0)]
        a_clean, _, _ = amota_amotp(seq, clean)
        a_dirty, _, pts = amota_amotp(seq, dirty)
        assert a_dirty < a_clean
        # at the lowest grid recall the single FP costs 1/(r*P)
        p = pts[0]
        assert p.motar == pytest.approx(1.0 - 1.0 / (0.05 * 20), abs=1e-12)

    def test_confidence_sweep_orders_thresholds(self):
        # half the preds at low confidence: high-recall points must use the
        # lower threshold and absorb its FPs
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(10)}}, 10)
        preds = [pl(0, f, (0, 0, 10 + f), conf=0.9) for f in range(5)]
        preds += [pl(0, f, (0, 0, 10 + f), conf=0.4) for f in range(5, 10)]
        fp_low = pl(99, 0, (500, 0, 500), conf=0.4)
        amota, _, pts = amota_amotp(seq, preds + [fp_low])
        for p in pts:
            if p.achievable and p.recall <= 0.5:
                assert p.fp == 0
            elif p.achievable:
                assert p.fp == 1

    def test_no_ground_truth_rejected(self):
        seq = make_seq({}, 2)
        with pytest.raises(InvalidArgument):
            amota_amotp(seq, [])

    def test_motar_never_exceeds_one(self):
        rng = np.random.default_rng(21)
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(8)},
                        1: {f: (6, 0, 10 + f) for f in range(8)}}, 8)
        preds = [pl(a.track_id, f.frame_index, a.box3d.center,
                    conf=float(rng.uniform(0.1, 1.0)))
                 for f in seq.frames for a in f.annotations]
        _, _, pts = amota_amotp(seq, preds)
        assert all(0.0 <= p.motar <= 1.0 for p in pts)


class TestEvaluate:
    def test_report_consistency(self):
        seq = make_seq({0: {f: (0, 0, 10 + f) for f in range(6)},
                        1: {f: (6, 0, 10 + f) for f in range(6)}}, 6)
        rep = evaluate(seq, perfect_preds(seq))
        assert rep.mota == 1.0 and rep.idf1 == 1.0 and rep.amota == 1.0
        assert rep.counts.gt_total == 12
        assert rep.dist_threshold == 2.0
        assert len(rep.per_recall) == 20
