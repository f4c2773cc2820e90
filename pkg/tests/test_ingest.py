import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import STANDING, make_pose
from posefuse.errors import FormatMismatch, ParseError
from posefuse.ingest import (
    CANONICAL_MAP,
    COCO17_MAP,
    FORMATS,
    OPENPOSE18_MAP,
    associate_persons,
    default_match_threshold,
    map_joints,
    parse_document,
    parse_estimator_output,
)
from posefuse.skeleton import AggregatedPose, FrameBundle, JointId, Keypoint, PoseProposal

# Published OpenPose COCO-18 body order and COCO-17 keypoint order.
OPENPOSE18_NAMES = ["nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow",
                    "l_wrist", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
                    "r_eye", "l_eye", "r_ear", "l_ear"]
COCO17_NAMES = ["nose", "l_eye", "r_eye", "l_ear", "r_ear", "l_shoulder", "r_shoulder", "l_elbow",
                "r_elbow", "l_wrist", "r_wrist", "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle",
                "r_ankle"]
CANON = {"nose": "head"}


def expected_target(name):
    name = CANON.get(name, name)
    return JointId.from_label(name) if name in [j.label for j in JointId] else None


def test_maps_match_published_tables():
    assert [expected_target(n) for n in OPENPOSE18_NAMES] == list(OPENPOSE18_MAP)
    assert [expected_target(n) for n in COCO17_NAMES] == list(COCO17_MAP)
    for fmt in FORMATS.values():
        produced = {j for j in fmt.joint_map if j is not None}
        assert produced == set(JointId)


def _flat(n, score=0.9, skip=()):
    vals = []
    for i in range(n):
        vals += [10.0 + i, 20.0 + 2 * i, 0.0 if i in skip else score]
    return vals


def test_openpose_full_frame():
    doc = [{"people": [{"pose_keypoints_2d": _flat(18)}]}]
    (bundle,) = parse_estimator_output(json.dumps(doc), "openpose18_json", estimator=2)
    (prop,) = bundle.proposals
    assert prop.estimator == 2 and prop.frame == 0
    assert all(kp.valid for kp in prop.joints)
    # head comes from the nose (index 0), left wrist from index 7
    assert (prop.joints[JointId.HEAD].x, prop.joints[JointId.HEAD].y) == (10.0, 20.0)
    assert (prop.joints[JointId.L_WRIST].x, prop.joints[JointId.L_WRIST].y) == (17.0, 34.0)


def test_empty_people():
    (bundle,) = parse_estimator_output('{"frames": [{"people": []}]}', "openpose18_json")
    assert bundle.proposals == ()


def test_coco_occluded_wrist():
    doc = {"frames": [{"frame": 5, "people": [{"keypoints": _flat(17, skip={9})}]}]}
    (bundle,) = parse_estimator_output(json.dumps(doc), "coco17_json")
    assert bundle.frame == 5
    joints = bundle.proposals[0].joints
    assert not joints[JointId.L_WRIST].valid
    assert sum(kp.valid for kp in joints) == 12


def test_coco_results_list_groups_by_image():
    dets = [
        {"image_id": "frame_000003.jpg", "keypoints": _flat(17), "score": 0.8},
        {"image_id": "frame_000003.jpg", "keypoints": _flat(17), "score": 0.7},
        {"image_id": "frame_000001.jpg", "keypoints": _flat(17, score=2)},
    ]
    bundles = parse_estimator_output(json.dumps(dets), "coco17_json")
    assert [b.frame for b in bundles] == [1, 3]
    assert len(bundles[1].proposals) == 2
    assert bundles[0].proposals[0].joints[0].score == 1.0


def test_canonical_input_defaults_score():
    doc = {"video": "v", "resolution": [320, 180], "persons": [
        {"id": 0, "frames": [{"t": 0, "joints": [[1.0, 2.0, None, True]] * 12 + [[0, 0, None, False]]}]}
    ]}
    parsed = parse_document(json.dumps(doc), "canonical_json")
    assert parsed.resolution == (320, 180)
    joints = parsed.bundles[0].proposals[0].joints
    assert joints[0].score == 1.0 and not joints[12].valid


def test_wrong_joint_count():
    doc = [{"people": [{"pose_keypoints_2d": _flat(17)}]}]
    with pytest.raises(FormatMismatch):
        parse_estimator_output(json.dumps(doc), "openpose18_json")


def test_malformed_json_has_offset():
    with pytest.raises(ParseError) as err:
        parse_estimator_output(b'[{"people": [}]', "openpose18_json")
    assert err.value.offset == 13


@given(st.sampled_from(sorted(FORMATS)), st.randoms())
def test_mapping_idempotent(kind, rnd):
    fmt = FORMATS[kind]
    src = [Keypoint(rnd.uniform(0, 100), rnd.uniform(0, 100)) for _ in fmt.joint_map]
    once = map_joints(src, fmt.joint_map)
    assert map_joints(once, CANONICAL_MAP) == once


# -- association ------------------------------------------------------------


def shifted(dx, dy=0.0):
    return make_pose([(x + dx, y + dy) for x, y in STANDING])


def prop(k, det, pose, t=1):
    return PoseProposal(k, t, det, pose)


def prev_pose(pose):
    return AggregatedPose(0, pose, 1.0)


def test_single_person_triple():
    b = FrameBundle(1, tuple(prop(k, 0, shifted(k)) for k in (1, 2, 3)))
    (pid, slots), = associate_persons(b, {0: prev_pose(shifted(0))}, 40.0)
    assert pid == 0 and [slots[k].estimator for k in (1, 2, 3)] == [1, 2, 3]


def brute_force_pairs(dist):
    """Optimal one-to-one assignment of a 2x2 matrix by enumeration."""
    straight = dist[0][0] + dist[1][1]
    crossed = dist[0][1] + dist[1][0]
    return [(0, 0), (1, 1)] if straight <= crossed else [(0, 1), (1, 0)]


def test_two_far_persons_two_estimators():
    a, b = shifted(0), shifted(300)
    bundle = FrameBundle(1, (prop(1, 0, b), prop(1, 1, a), prop(2, 0, shifted(302)), prop(2, 1, shifted(1))))
    prev = {0: prev_pose(a), 1: prev_pose(b)}
    out = dict(associate_persons(bundle, prev, 40.0, estimators=(1, 2, 3)))
    from posefuse.ingest import mean_joint_distance as mjd
    for k, dets in ((1, (b, a)), (2, (shifted(302), shifted(1)))):
        dist = [[mjd(d, prev[p].joints) for d in dets] for p in (0, 1)]
        for p, d in brute_force_pairs(dist):
            assert out[p][k].person == d
    assert out[0][3] is None and out[1][3] is None


def test_spurious_detection_becomes_new_person():
    bundle = FrameBundle(1, (prop(1, 0, shifted(0)), prop(2, 0, shifted(1)), prop(3, 0, shifted(400))))
    out = associate_persons(bundle, {0: prev_pose(shifted(0))}, 40.0, next_id=7)
    assert [pid for pid, _ in out] == [0, 7]
    assert out[1][1][3].estimator == 3 and out[1][1][1] is None


def test_new_people_grouped_around_lowest_estimator():
    bundle = FrameBundle(0, (prop(2, 0, shifted(2), 0), prop(1, 0, shifted(0), 0), prop(3, 0, shifted(500), 0)))
    out = associate_persons(bundle, {}, 40.0)
    assert len(out) == 2
    assert out[0][1][1].estimator == 1 and out[0][1][2].estimator == 2
    assert out[1][1][3].estimator == 3


def _summary(result):
    return [(pid, tuple(sorted((k, p.person) for k, p in slots.items() if p))) for pid, slots in result]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_unique_assignment_and_order_stability(seed):
    rnd = random.Random(seed)
    props = []
    for k in (1, 2, 3):
        for det in range(rnd.randint(0, 3)):
            props.append(prop(k, det, shifted(rnd.choice([0, 150, 300]) + rnd.uniform(-15, 15))))
    prev = {i: prev_pose(shifted(x)) for i, x in enumerate(rnd.sample([0, 150, 300], rnd.randint(0, 3)))}
    res = associate_persons(FrameBundle(1, tuple(props)), prev, default_match_threshold((640, 480)))
    used = [(k, p.person) for _, slots in res for k, p in slots.items() if p]
    assert len(used) == len(set(used)) == len(props)
    rnd.shuffle(props)
    again = associate_persons(FrameBundle(1, tuple(props)), prev, default_match_threshold((640, 480)))
    assert _summary(again) == _summary(res)


def test_default_threshold():
    assert default_match_threshold((640, 480)) == 40.0
