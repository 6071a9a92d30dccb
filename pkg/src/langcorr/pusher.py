"""Continuous 2D block-relocation world with deterministic disc physics.

A force-controlled gripper pushes one of three movable blocks toward a
target position placed near one of five fixed obstacle blocks. Dynamics:
semi-implicit integration with per-step velocity damping; collisions are
resolved by positional projection (blocks are discs; fixed blocks and the
workspace walls never move).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .language import FIXED_COLORS, MOVABLE_COLORS, SIDE_WORDS

WORKSPACE = 10.0
GRIPPER_R = 0.3
BLOCK_R = 0.4
DT = 0.05
FORCE = 40.0
DAMPING = 0.9
SUCCESS_RADIUS = 0.5
MAX_STEPS = 350
N_SUBSTEPS = 5
STATE_DIM = 19

ACTIONS = ["up", "down", "left", "right"]
FORCE_VECS = {"up": (0.0, 1.0), "down": (0.0, -1.0),
              "left": (-1.0, 0.0), "right": (1.0, 0.0)}
ORIENTATIONS = {"right": 0.0, "up": math.pi / 2, "left": math.pi,
                "down": -math.pi / 2}

N_TASKS_FULL = 1000
N_TRAIN_FULL = 750
SPLIT_SHUFFLE_SEED = 20240612


@dataclass
class PusherTask:
    task_id: str
    movable_start: np.ndarray  # (3, 2), colors follow MOVABLE_COLORS
    fixed_pos: np.ndarray  # (5, 2), colors follow FIXED_COLORS
    goal_block: int
    target: np.ndarray  # (2,)
    ref_color: str  # obstacle color named in the instruction
    gripper_start: np.ndarray  # (2,)
    instruction: str
    split: str

    @property
    def goal_color(self) -> str:
        return MOVABLE_COLORS[self.goal_block]

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "movable_start": self.movable_start.tolist(),
            "fixed_pos": self.fixed_pos.tolist(),
            "goal_block": self.goal_block,
            "target": self.target.tolist(),
            "ref_color": self.ref_color,
            "gripper_start": self.gripper_start.tolist(),
            "instruction": self.instruction,
            "split": self.split,
        }

    @staticmethod
    def from_json(d: dict) -> "PusherTask":
        return PusherTask(
            task_id=d["task_id"],
            movable_start=np.array(d["movable_start"], dtype=np.float64),
            fixed_pos=np.array(d["fixed_pos"], dtype=np.float64),
            goal_block=d["goal_block"],
            target=np.array(d["target"], dtype=np.float64),
            ref_color=d["ref_color"],
            gripper_start=np.array(d["gripper_start"], dtype=np.float64),
            instruction=d["instruction"],
            split=d["split"],
        )


@dataclass
class PusherState:
    gripper: np.ndarray  # (2,)
    orientation: float  # heading of the last applied force
    velocity: np.ndarray  # (2,)
    movable: np.ndarray  # (3, 2)
    steps: int = 0

    def observation(self, task: PusherTask) -> np.ndarray:
        """Flat 19-dim vector: gripper x, y, orientation, movable xy, fixed xy."""
        return np.concatenate([
            self.gripper, [self.orientation],
            self.movable.reshape(-1), task.fixed_pos.reshape(-1),
        ]).astype(np.float32)


def reset(task: PusherTask) -> PusherState:
    return PusherState(gripper=task.gripper_start.copy(), orientation=0.0,
                       velocity=np.zeros(2), movable=task.movable_start.copy())


def _push_out(ax, ay, bx, by, min_dist):
    """Displacement to add to b so it clears a by min_dist, or None."""
    dx, dy = bx - ax, by - ay
    d2 = dx * dx + dy * dy
    if d2 >= min_dist * min_dist:
        return None
    d = math.sqrt(d2)
    if d < 1e-9:
        dx, dy, d = 1.0, 0.0, 1.0
    s = (min_dist - d) / d
    return dx * s, dy * s


def step(state: PusherState, action: str, task: PusherTask) -> PusherState:
    """Apply one cardinal force for one control step."""
    if state.steps >= MAX_STEPS:
        raise ValueError("trajectory length limit reached")
    fx, fy = FORCE_VECS[action]
    vx = state.velocity[0] * DAMPING + fx * FORCE * DT
    vy = state.velocity[1] * DAMPING + fy * FORCE * DT
    gx, gy = float(state.gripper[0]), float(state.gripper[1])
    m = [(float(p[0]), float(p[1])) for p in state.movable]
    fixed = [(float(p[0]), float(p[1])) for p in task.fixed_pos]
    sub = DT / N_SUBSTEPS
    lo_g, hi_g = GRIPPER_R, WORKSPACE - GRIPPER_R
    lo_b, hi_b = BLOCK_R, WORKSPACE - BLOCK_R
    gb = GRIPPER_R + BLOCK_R
    bb = 2 * BLOCK_R
    for _ in range(N_SUBSTEPS):
        gx += vx * sub
        gy += vy * sub
        for _ in range(8):
            moved = False
            if gx < lo_g or gx > hi_g:
                gx = min(max(gx, lo_g), hi_g)
                vx = 0.0
                moved = True
            if gy < lo_g or gy > hi_g:
                gy = min(max(gy, lo_g), hi_g)
                vy = 0.0
                moved = True
            for i in range(3):
                bx, by = m[i]
                p = _push_out(gx, gy, bx, by, gb)
                if p:
                    bx += p[0]
                    by += p[1]
                    moved = True
                if bx < lo_b or bx > hi_b or by < lo_b or by > hi_b:
                    bx = min(max(bx, lo_b), hi_b)
                    by = min(max(by, lo_b), hi_b)
                    moved = True
                for fx2, fy2 in fixed:
                    p = _push_out(fx2, fy2, bx, by, bb)
                    if p:
                        bx = min(max(bx + p[0], lo_b), hi_b)
                        by = min(max(by + p[1], lo_b), hi_b)
                        moved = True
                m[i] = (bx, by)
                for j in range(3):
                    if j != i:
                        p = _push_out(bx, by, m[j][0], m[j][1], bb)
                        if p:
                            m[j] = (m[j][0] + p[0], m[j][1] + p[1])
                            moved = True
            # gripper yields to blocks it can no longer displace
            for bx, by in m:
                p = _push_out(bx, by, gx, gy, gb)
                if p:
                    gx = min(max(gx + p[0], lo_g), hi_g)
                    gy = min(max(gy + p[1], lo_g), hi_g)
                    moved = True
            for fx2, fy2 in fixed:
                p = _push_out(fx2, fy2, gx, gy, gb)
                if p:
                    gx = min(max(gx + p[0], lo_g), hi_g)
                    gy = min(max(gy + p[1], lo_g), hi_g)
                    moved = True
            if not moved:
                break
    return PusherState(gripper=np.array([gx, gy]),
                       orientation=ORIENTATIONS[action],
                       velocity=np.array([vx, vy]),
                       movable=np.array(m), steps=state.steps + 1)


def block_target_dist(state: PusherState, task: PusherTask) -> float:
    return float(np.hypot(*(state.movable[task.goal_block] - task.target)))


def is_success(state: PusherState, task: PusherTask) -> bool:
    return block_target_dist(state, task) <= SUCCESS_RADIUS


def dense_reward(state: PusherState, task: PusherTask) -> float:
    """-(gripper-to-block distance + 5 * block-to-target distance)."""
    block = state.movable[task.goal_block]
    return -(float(np.hypot(*(state.gripper - block)))
             + 5.0 * float(np.hypot(*(block - task.target))))


def completion_rate(states: list[PusherState], task: PusherTask) -> float:
    """1 - final/initial block-to-target distance, clamped to [0, 1]."""
    initial = float(np.hypot(*(states[0].movable[task.goal_block] - task.target)))
    if initial <= 1e-12:
        return 1.0
    final = block_target_dist(states[-1], task)
    return float(np.clip(1.0 - final / initial, 0.0, 1.0))


@dataclass
class PushAnalysis:
    residual: np.ndarray  # target - final goal-block position
    wrong_block: bool
    goal_color: str
    ref_color: str  # fixed block nearest the true target
    ref_side: str  # side of the reference block the target lies on
    closer_applicable: bool
    initial_dist: float
    final_dist: float
    completion: float
    done: bool


def analyze_trajectory(states: list[PusherState], task: PusherTask) -> PushAnalysis:
    first, last = states[0], states[-1]
    goal = task.goal_block
    residual = task.target - last.movable[goal]
    disp = np.hypot(*(last.movable - first.movable).T)
    wrong = bool(np.any((disp > disp[goal]) & (disp > 0.1)
                        & (np.arange(3) != goal)))
    if disp[goal] <= 0.1 and not np.any(disp > 0.1):
        wrong = True  # nothing useful was touched: name the right block
    ref_idx = int(np.argmin(np.hypot(*(task.fixed_pos - task.target).T)))
    ref_pos = task.fixed_pos[ref_idx]
    off = task.target - ref_pos
    if abs(off[0]) >= abs(off[1]):
        side = "left" if off[0] < 0 else "right"
    else:
        side = "down" if off[1] < 0 else "up"
    assert side in SIDE_WORDS
    final_ref = float(np.hypot(*(last.movable[goal] - ref_pos)))
    target_ref = float(np.hypot(*off))
    initial = float(np.hypot(*(first.movable[goal] - task.target)))
    final = float(np.hypot(*residual))
    comp = 1.0 if initial <= 1e-12 else float(np.clip(1.0 - final / initial, 0.0, 1.0))
    return PushAnalysis(
        residual=residual, wrong_block=wrong,
        goal_color=task.goal_color,
        ref_color=FIXED_COLORS[ref_idx], ref_side=side,
        closer_applicable=final_ref > target_ref + 0.3,
        initial_dist=initial, final_dist=final,
        completion=comp, done=final <= SUCCESS_RADIUS)


def _sample_positions(rng: np.random.Generator):
    """Non-overlapping gripper, 3 movable, 5 fixed positions and a target."""
    margin = 1.0
    placed = []

    def draw(clearance):
        for _ in range(200):
            p = rng.uniform(margin, WORKSPACE - margin, size=2)
            if all(np.hypot(*(p - q)) >= clearance for q in placed):
                placed.append(p)
                return p
        raise RuntimeError("could not place disc")

    gripper = draw(1.2)
    movable = np.array([draw(1.2) for _ in range(3)])
    fixed = np.array([draw(1.4) for _ in range(5)])
    for _ in range(200):
        target = rng.uniform(margin, WORKSPACE - margin, size=2)
        near_fixed = np.min(np.hypot(*(fixed - target).T))
        if 1.0 <= near_fixed <= 3.0 and \
                all(np.hypot(*(target - m)) >= 1.5 for m in movable):
            return gripper, movable, fixed, target
    raise RuntimeError("could not place target")


def _generate_candidate(index: int, attempt: int, split: str) -> PusherTask:
    rng = np.random.default_rng((SPLIT_SHUFFLE_SEED, index, attempt))
    gripper, movable, fixed, target = _sample_positions(rng)
    goal_block = int(rng.integers(3))
    order = np.argsort(np.hypot(*(fixed - target).T))
    ref_idx = int(order[rng.integers(2)])  # closest or 2nd closest
    ref_color = FIXED_COLORS[ref_idx]
    instruction = f"move {MOVABLE_COLORS[goal_block]} close to {ref_color}"
    return PusherTask(
        task_id=f"push-{split}-{index}",
        movable_start=movable, fixed_pos=fixed, goal_block=goal_block,
        target=target, ref_color=ref_color, gripper_start=gripper,
        instruction=instruction, split=split)


def generate_task(index: int, split: str, screen: bool = True) -> PusherTask:
    """Deterministic task for a global index, screened by an expert dry-run."""
    from .experts import pusher_expert_rollout
    for attempt in range(100):
        task = _generate_candidate(index, attempt, split)
        if not screen:
            return task
        states, _ = pusher_expert_rollout(task)
        if completion_rate(states, task) >= 0.9:
            return task
    raise RuntimeError(f"no solvable pusher task found for index {index}")


def split_indices() -> dict[str, list[int]]:
    rng = np.random.default_rng(SPLIT_SHUFFLE_SEED)
    order = rng.permutation(N_TASKS_FULL)
    return {"train": [int(i) for i in order[:N_TRAIN_FULL]],
            "test": [int(i) for i in order[N_TRAIN_FULL:]]}


def sample_task(seed: int, split: str = "train", screen: bool = True) -> PusherTask:
    pool = split_indices()[split]
    rng = np.random.default_rng((seed, 0x9054))
    return generate_task(pool[rng.integers(len(pool))], split, screen=screen)


def render_payload(state: PusherState, task: PusherTask,
                   trajectory: list | None = None) -> dict:
    return {
        "kind": "pusher",
        "workspace": WORKSPACE,
        "gripper": {"pos": state.gripper.tolist(), "radius": GRIPPER_R,
                    "orientation": state.orientation},
        "movable": [{"color": MOVABLE_COLORS[i], "pos": state.movable[i].tolist(),
                     "radius": BLOCK_R} for i in range(3)],
        "fixed": [{"color": FIXED_COLORS[i], "pos": task.fixed_pos[i].tolist(),
                   "radius": BLOCK_R} for i in range(5)],
        "target": {"pos": task.target.tolist(), "radius": SUCCESS_RADIUS,
                   "block": task.goal_color},
        "trajectory": trajectory or [],
    }


def save_tasks(tasks: list[PusherTask], path) -> None:
    with open(path, "w") as f:
        for t in tasks:
            f.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def load_tasks(path) -> list[PusherTask]:
    with open(path) as f:
        return [PusherTask.from_json(json.loads(line)) for line in f if line.strip()]
