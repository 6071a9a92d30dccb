"""Pusher physics: integration, collision resolution, scoring, analysis."""

import dataclasses
import json

import numpy as np
import pytest

from langcorr import pusher as pu
from langcorr.language import FIXED_COLORS, MOVABLE_COLORS


def free_task():
    """Task with everything parked far from the workspace center."""
    return pu.PusherTask(
        task_id="push-test-free",
        movable_start=np.array([[1.0, 1.0], [1.0, 9.0], [9.0, 9.0]]),
        fixed_pos=np.array([[9.0, 1.0], [9.0, 3.0], [9.0, 5.0],
                            [9.0, 7.0], [7.0, 9.0]]),
        goal_block=0,
        target=np.array([8.0, 1.8]),
        ref_color=FIXED_COLORS[0],
        gripper_start=np.array([5.0, 5.0]),
        instruction=f"move {MOVABLE_COLORS[0]} close to {FIXED_COLORS[0]}",
        split="test")


def all_discs(state, task):
    """(pos, radius) for every disc in the scene."""
    out = [(state.gripper, pu.GRIPPER_R)]
    out += [(p, pu.BLOCK_R) for p in state.movable]
    out += [(p, pu.BLOCK_R) for p in task.fixed_pos]
    return out


class TestDynamics:
    def test_observation_layout(self):
        t = free_task()
        s = pu.reset(t)
        obs = s.observation(t)
        assert obs.shape == (19,) and obs.dtype == np.float32
        np.testing.assert_allclose(obs[:2], t.gripper_start)
        assert obs[2] == 0.0  # initial orientation
        np.testing.assert_allclose(obs[3:9], t.movable_start.reshape(-1))
        np.testing.assert_allclose(obs[9:19], t.fixed_pos.reshape(-1))

    def test_free_motion_first_step_displacement(self):
        # from rest, one step moves the gripper by force * dt^2 (the new
        # velocity force*dt acts over the full dt via substeps)
        t = free_task()
        s = pu.reset(t)
        s2 = pu.step(s, "right", t)
        expected = pu.FORCE * pu.DT * pu.DT
        assert abs((s2.gripper[0] - s.gripper[0]) - expected) < 1e-9
        assert abs(s2.gripper[1] - s.gripper[1]) < 1e-12
        assert s2.orientation == 0.0

    def test_orientation_tracks_last_force(self):
        t = free_task()
        s = pu.reset(t)
        for a, want in (("up", np.pi / 2), ("left", np.pi),
                        ("down", -np.pi / 2), ("right", 0.0)):
            s = pu.step(s, a, t)
            assert s.orientation == want

    def test_velocity_decays_when_alternating_forces(self):
        # damping 0.9 per step caps speed; opposing pushes cancel drift
        t = free_task()
        s = pu.reset(t)
        for _ in range(50):
            s = pu.step(s, "up", t)
            s = pu.step(s, "down", t)
        assert np.all(np.abs(s.velocity) < pu.FORCE * pu.DT / (1 - pu.DAMPING))

    def test_terminal_velocity_geometric_series(self):
        # v_{k+1} = v_k * damping + force*dt converges to force*dt/(1-damping)
        t = free_task()
        s = pu.reset(t)
        limit = pu.FORCE * pu.DT / (1 - pu.DAMPING)
        prev = 0.0
        for _ in range(200):
            if s.gripper[0] > pu.WORKSPACE - 2:
                break
            s = pu.step(s, "right", t)
            assert s.velocity[0] <= limit + 1e-9
            assert s.velocity[0] >= prev - 1e-9  # monotone approach
            prev = s.velocity[0]

    def test_determinism(self):
        t = pu.generate_task(3, "train", screen=False)
        rng = np.random.default_rng(4)
        acts = [pu.ACTIONS[i] for i in rng.integers(0, 4, size=120)]
        outs = []
        for _ in range(2):
            s = pu.reset(t)
            for a in acts:
                s = pu.step(s, a, t)
            outs.append((s.gripper.copy(), s.movable.copy(),
                         s.velocity.copy()))
        np.testing.assert_array_equal(outs[0][0], outs[1][0])
        np.testing.assert_array_equal(outs[0][1], outs[1][1])
        np.testing.assert_array_equal(outs[0][2], outs[1][2])

    def test_step_limit_enforced(self):
        t = free_task()
        s = pu.reset(t)
        for _ in range(pu.MAX_STEPS):
            s = pu.step(s, "up", t)
        with pytest.raises(ValueError):
            pu.step(s, "up", t)


class TestCollisions:
    def test_no_interpenetration_under_random_rollouts(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            t = pu.generate_task(20 + trial, "train", screen=False)
            s = pu.reset(t)
            for i in rng.integers(0, 4, size=200):
                s = pu.step(s, pu.ACTIONS[i], t)
                discs = all_discs(s, t)
                for a in range(len(discs)):
                    for b in range(a + 1, len(discs)):
                        (pa, ra), (pb, rb) = discs[a], discs[b]
                        gap = float(np.hypot(*(pa - pb))) - (ra + rb)
                        assert gap >= -1e-6, f"trial {trial} discs {a},{b}"

    def test_walls_contain_everything(self):
        rng = np.random.default_rng(12)
        t = pu.generate_task(30, "train", screen=False)
        s = pu.reset(t)
        for i in rng.integers(0, 4, size=300):
            s = pu.step(s, pu.ACTIONS[i], t)
            assert pu.GRIPPER_R - 1e-9 <= s.gripper[0] <= \
                pu.WORKSPACE - pu.GRIPPER_R + 1e-9
            assert pu.GRIPPER_R - 1e-9 <= s.gripper[1] <= \
                pu.WORKSPACE - pu.GRIPPER_R + 1e-9
            assert np.all(s.movable >= pu.BLOCK_R - 1e-9)
            assert np.all(s.movable <= pu.WORKSPACE - pu.BLOCK_R + 1e-9)

    def test_fixed_blocks_never_move(self):
        t = pu.generate_task(31, "train", screen=False)
        before = t.fixed_pos.copy()
        s = pu.reset(t)
        rng = np.random.default_rng(13)
        for i in rng.integers(0, 4, size=300):
            s = pu.step(s, pu.ACTIONS[i], t)
        np.testing.assert_array_equal(t.fixed_pos, before)

    def test_gripper_pushes_block(self):
        # gripper directly left of a block, pushing right, moves the block
        t = free_task()
        s = dataclasses.replace(pu.reset(t),
                                gripper=np.array([0.9 - 1e-3, 1.0]),
                                movable=np.array([[1.6, 1.0],
                                                  [1.0, 9.0], [9.0, 9.0]]))
        x0 = s.movable[0][0]
        for _ in range(20):
            s = pu.step(s, "right", t)
        assert s.movable[0][0] > x0 + 1.0
        # contact maintained within the resolution tolerance
        gap = float(np.hypot(*(s.gripper - s.movable[0]))) - \
            (pu.GRIPPER_R + pu.BLOCK_R)
        assert gap >= -1e-6

    def test_push_against_fixed_block_is_stable(self):
        # drive a movable block into a fixed one: positions settle, never
        # overlap, and the assembly does not explode
        t = free_task()
        s = dataclasses.replace(
            pu.reset(t),
            gripper=np.array([7.0, 1.0]),
            movable=np.array([[7.9, 1.0], [1.0, 9.0], [5.0, 9.0]]))
        # fixed block at (9, 1): push right into it
        for _ in range(60):
            s = pu.step(s, "right", t)
            gap = float(np.hypot(*(s.movable[0] - t.fixed_pos[0]))) - \
                2 * pu.BLOCK_R
            assert gap >= -1e-6
        # block pinned just left of the fixed block
        assert abs(s.movable[0][0] - (9.0 - 2 * pu.BLOCK_R)) < 0.05
        assert abs(s.movable[0][1] - 1.0) < 0.05


class TestScoring:
    def test_completion_rate_matches_remeasurement(self):
        rng = np.random.default_rng(14)
        t = pu.generate_task(40, "train", screen=False)
        s = pu.reset(t)
        states = [s]
        for i in rng.integers(0, 4, size=150):
            s = pu.step(s, pu.ACTIONS[i], t)
            states.append(s)
        c = pu.completion_rate(states, t)
        d0 = float(np.hypot(*(states[0].movable[t.goal_block] - t.target)))
        d1 = float(np.hypot(*(states[-1].movable[t.goal_block] - t.target)))
        assert abs(c - np.clip(1 - d1 / d0, 0, 1)) < 1e-12

    def test_completion_clamped_to_unit_interval(self):
        t = free_task()
        s0 = pu.reset(t)
        # teleport the goal block farther from the target than it started
        worse = dataclasses.replace(
            s0, movable=np.array([[1.0, 9.0], [1.0, 8.0], [9.0, 9.0]]))
        assert pu.completion_rate([s0, worse], t) == 0.0
        on_target = dataclasses.replace(
            s0, movable=np.array([t.target, [1.0, 8.0], [9.0, 9.0]]))
        assert pu.completion_rate([s0, on_target], t) == 1.0

    def test_success_threshold(self):
        t = free_task()
        s = pu.reset(t)
        near = dataclasses.replace(
            s, movable=np.array([t.target + [0.49, 0.0],
                                 [1.0, 9.0], [9.0, 9.0]]))
        far = dataclasses.replace(
            s, movable=np.array([t.target + [0.51, 0.0],
                                 [1.0, 9.0], [9.0, 9.0]]))
        assert pu.is_success(near, t)
        assert not pu.is_success(far, t)

    def test_dense_reward_linearity(self):
        t = free_task()
        s = pu.reset(t)
        r = pu.dense_reward(s, t)
        block = s.movable[t.goal_block]
        want = -(np.hypot(*(s.gripper - block))
                 + 5.0 * np.hypot(*(block - t.target)))
        assert abs(r - want) < 1e-12


class TestAnalysis:
    def test_reference_block_is_nearest_by_sort_oracle(self):
        for idx in range(20):
            t = pu.generate_task(idx, "train", screen=False)
            states = [pu.reset(t)]
            a = pu.analyze_trajectory(states, t)
            dists = np.hypot(*(t.fixed_pos - t.target).T)
            assert a.ref_color == FIXED_COLORS[int(np.argsort(dists)[0])]

    def test_task_reference_within_two_nearest(self):
        for idx in range(30):
            t = pu.generate_task(idx, "test", screen=False)
            dists = np.hypot(*(t.fixed_pos - t.target).T)
            two_nearest = {FIXED_COLORS[int(i)] for i in np.argsort(dists)[:2]}
            assert t.ref_color in two_nearest

    def test_wrong_block_when_only_decoy_moves(self):
        t = free_task()  # goal block 0
        s0 = pu.reset(t)
        moved_decoy = dataclasses.replace(
            s0, movable=np.array([[1.0, 1.0], [1.0, 7.5], [9.0, 9.0]]))
        a = pu.analyze_trajectory([s0, moved_decoy], t)
        assert a.wrong_block

    def test_wrong_block_when_nothing_moves(self):
        t = free_task()
        s0 = pu.reset(t)
        a = pu.analyze_trajectory([s0, s0], t)
        assert a.wrong_block

    def test_not_wrong_block_when_goal_moves_most(self):
        t = free_task()
        s0 = pu.reset(t)
        moved_goal = dataclasses.replace(
            s0, movable=np.array([[2.5, 1.0], [1.0, 9.0], [9.0, 9.0]]))
        a = pu.analyze_trajectory([s0, moved_goal], t)
        assert not a.wrong_block

    def test_side_word_matches_dominant_axis(self):
        t = free_task()
        s0 = pu.reset(t)
        a = pu.analyze_trajectory([s0], t)
        ref = t.fixed_pos[int(np.argmin(np.hypot(*(t.fixed_pos - t.target).T)))]
        off = t.target - ref
        if abs(off[0]) >= abs(off[1]):
            assert a.ref_side == ("left" if off[0] < 0 else "right")
        else:
            assert a.ref_side == ("down" if off[1] < 0 else "up")


class TestTasksAndSplits:
    def test_split_sizes_and_disjointness(self):
        idx = pu.split_indices()
        assert len(idx["train"]) == 750
        assert len(idx["test"]) == 250
        assert set(idx["train"]) & set(idx["test"]) == set()
        assert set(idx["train"]) | set(idx["test"]) == set(range(1000))

    def test_generate_deterministic(self):
        a = pu.generate_task(5, "train", screen=False)
        b = pu.generate_task(5, "train", screen=False)
        assert a.to_json() == b.to_json()

    def test_task_geometry_invariants(self):
        for idx in range(15):
            t = pu.generate_task(idx, "train", screen=False)
            near = float(np.min(np.hypot(*(t.fixed_pos - t.target).T)))
            assert 1.0 <= near <= 3.0
            # starting scene has no overlaps
            discs = all_discs(pu.reset(t), t)
            for a in range(len(discs)):
                for b in range(a + 1, len(discs)):
                    (pa, ra), (pb, rb) = discs[a], discs[b]
                    assert float(np.hypot(*(pa - pb))) >= ra + rb - 1e-9

    def test_instruction_template(self):
        t = pu.generate_task(6, "train", screen=False)
        assert t.instruction == \
            f"move {MOVABLE_COLORS[t.goal_block]} close to {t.ref_color}"

    def test_screened_task_expert_solvable(self):
        from langcorr import experts
        t = pu.sample_task(0, "train", screen=True)
        states, _ = experts.pusher_expert_rollout(t)
        assert pu.completion_rate(states, t) >= 0.9

    def test_json_round_trip(self, tmp_path):
        tasks = [pu.generate_task(i, "test", screen=False) for i in range(4)]
        path = tmp_path / "tasks.jsonl"
        pu.save_tasks(tasks, path)
        loaded = pu.load_tasks(path)
        assert [t.to_json() for t in loaded] == [t.to_json() for t in tasks]

    def test_render_payload_jsonable(self):
        t = free_task()
        json.dumps(pu.render_payload(pu.reset(t), t))
