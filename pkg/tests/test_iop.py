from dataclasses import replace

import numpy as np
import pytest

from objperm.config import IopConfig
from objperm.detector import ProposalBatch, SyntheticDetector
from objperm.geometry import DetectionBatch, iou_matrix, nms
from objperm.iop import FeedbackBuffer, assign_ids, emit, history_feedback
from objperm.pipelines import make_pipeline, run_sequence
from objperm.runner import evaluate, tracks_of, world_ground_truth
from objperm.world import Agent, World, WorldSpec, crossing, crowd


def _emitted(traces):
    return [t.emitted for t in traces]


def test_feedback_buffer_newest_first_and_bounded():
    buf = FeedbackBuffer(2)
    for k in range(4):
        buf = buf.push(DetectionBatch([[k, 0, 1, 1]], [0.9]))
    assert [b.boxes[0, 0] for b in buf] == [3.0, 2.0]
    with pytest.raises(ValueError):
        FeedbackBuffer(0)


def test_history_feedback_dedups_older_frames():
    cfg = IopConfig()
    newest = DetectionBatch([[0, 0, 100, 100], [0.5, 0, 100, 100]], [0.9, 0.8])
    older = DetectionBatch([[0.2, 0, 100, 100], [300, 0, 50, 50], [0, 0, 10, 10]], [0.95, 0.6, 0.1])
    buf = FeedbackBuffer(2).push(older).push(newest)
    fb = history_feedback(buf, cfg)
    # The newest frame is kept whole; the near-copy from the older frame is
    # dropped and the low-confidence box never qualifies.
    assert fb.boxes.tolist() == [[0, 0, 100, 100], [0.5, 0, 100, 100], [300, 0, 50, 50]]
    assert fb.objectness.tolist() == [0.9, 0.8, 0.6]


def test_history_feedback_capacity_bound():
    rng = np.random.default_rng(0)
    buf = FeedbackBuffer(4)
    for _ in range(6):
        buf = buf.push(DetectionBatch(rng.uniform(0, 500, (7, 4)), rng.uniform(0.5, 1, 7)))
    assert len(history_feedback(buf, IopConfig())) <= 4 * 7


def test_emit_cut_commutes_with_nms():
    rng = np.random.default_rng(4)
    cfg = IopConfig()
    for _ in range(200):
        n = int(rng.integers(0, 30))
        refined = DetectionBatch(np.c_[rng.uniform(0, 50, (n, 2)), rng.uniform(5, 30, (n, 2))], rng.random(n))
        full = nms(refined, cfg.nms_iou)
        expected = full.take(np.nonzero(full.confidence >= cfg.emit_conf)[0])
        assert emit(refined, cfg) == expected


def test_zero_particles_is_plain():
    det = SyntheticDetector(crowd(2, frames=30), seed=2)
    plain = _emitted(run_sequence(make_pipeline("plain", det)))
    none = _emitted(run_sequence(make_pipeline("iop-particles", det, replace(IopConfig(), particles=0))))
    assert plain == none


def test_identical_seeds_give_identical_streams():
    spec = crowd(5, frames=30)
    runs = [
        _emitted(run_sequence(make_pipeline("iop-particles", SyntheticDetector(spec, seed=1), seed=3)))
        for _ in range(2)
    ]
    assert runs[0] == runs[1]


def _static_ious(pipeline, seeds=range(10)):
    agent = Agent(1, (60.0, 150.0), ((0, 400.0, 270.0), (29, 400.0, 270.0)))
    spec = WorldSpec((960.0, 540.0), 30, (agent,), (), 0)
    truth = agent.box_at(0).as_array()[None]
    out = []
    for seed in seeds:
        traces = run_sequence(make_pipeline(pipeline, SyntheticDetector(spec, seed=seed), seed=seed))
        out.append([iou_matrix(t.emitted.boxes, truth).max(initial=0.0) for t in traces])
    return np.array(out)


def test_static_object_reaches_noise_floor_with_particles():
    # Refinement noise of 1 px on every box component caps single-frame IoU
    # near 0.956 for this box size, so the check is on the pooled level from
    # frame 2 on plus a per-frame floor, not on every frame clearing 0.95.
    particles = _static_ious("iop-particles")[:, 2:]
    plain = _static_ious("plain")[:, 2:]
    assert particles.min() >= 0.85
    assert particles.mean() >= 0.95
    assert particles.mean() >= plain.mean() - 0.005


def _front_pass_world():
    """A large agent walks in front of a static one, hiding it fully for frames 9-11."""
    target = Agent(1, (40.0, 100.0), ((0, 300.0, 200.0), (29, 300.0, 200.0)))
    front = Agent(2, (80.0, 200.0), ((0, 100.0, 200.0), (29, 680.0, 200.0)))
    return WorldSpec((960.0, 540.0), 30, (target, front), (), 0)


def test_history_recovers_after_full_occlusion():
    spec = _front_pass_world()
    world = World(spec)
    vis = [world.truth(t).visibility[0] for t in range(8, 13)]
    assert vis == pytest.approx([0.5, 0.0, 0.0, 0.0, 0.5])
    target = spec.agents[0].box_at(12).as_array()[None]
    found = {}
    for n in (1, 5):
        hits = 0
        for seed in range(20):
            det = SyntheticDetector(spec, seed=seed)
            traces = run_sequence(make_pipeline("iop-history", det, replace(IopConfig(), history=n)))
            hits += bool((iou_matrix(traces[12].emitted.boxes, target)[:, 0] >= 0.5).any())
        found[n] = hits
    assert found[5] == 20
    assert found[1] < 20


def test_assign_ids_examples():
    batch = DetectionBatch([[0, 0, 10, 10], [50, 0, 10, 10]], [0.9, 0.8])
    first, nxt = assign_ids(None, batch, 1)
    assert first.track_id.tolist() == [1, 2] and nxt == 3
    again, nxt2 = assign_ids(first, batch, nxt)
    assert again.track_id.tolist() == [1, 2] and nxt2 == 3
    fresh, _ = assign_ids(DetectionBatch.empty(), batch, 7)
    assert fresh.track_id.tolist() == [7, 8]


def test_crossing_has_at_most_one_switch():
    spec = crossing()
    gt = world_ground_truth(World(spec))
    for seed in range(5):
        traces = run_sequence(make_pipeline("iop-lite", SyntheticDetector(spec, seed=seed)))
        assert evaluate(tracks_of(traces), gt, ["mot"], 0.5)["ids"] <= 1


def test_iop_never_touches_detector_state():
    det = SyntheticDetector(crowd(0, frames=10), seed=0)
    before = (det.cfg, det.seed, det.world.spec)
    run_sequence(make_pipeline("iop-particles", det, replace(IopConfig(), history=3)))
    assert (det.cfg, det.seed, det.world.spec) == before
    props = det.propose(3)
    assert det.refine(3, props) == SyntheticDetector(crowd(0, frames=10), seed=0).refine(3, props)


def test_lite_proposals_extend_plain():
    det = SyntheticDetector(crowd(1, frames=20), seed=1)
    plain = run_sequence(make_pipeline("plain", det))
    lite = run_sequence(make_pipeline("iop-lite", det))
    for p, q in zip(plain, lite):
        k = len(p.proposals)
        assert ProposalBatch(q.proposals.boxes[:k], q.proposals.objectness[:k]) == p.proposals
        assert len(q.proposals) - k == q.feedback
