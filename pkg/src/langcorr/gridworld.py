"""Six-room object-delivery world with egocentric, occluded observations.

Floor plan: two rows of three 6x6-interior rooms flanking a one-cell-wide
central corridor. Each room has a single door onto the corridor; the six
doors carry the six colors in a per-task random permutation. A task is
five ordered subgoals: enter the object's room, pick the object up, exit,
enter the goal room, and stand on the goal square while holding the object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import language
from .language import GRID_COLORS, GRID_SHAPES, Vocab

# cell type codes (observation channel 1)
EMPTY, WALL, DOOR_CLOSED, DOOR_LOCKED, TRIANGLE, SQUARE, CIRCLE, GOAL = range(8)
SHAPE_CODE = {"triangle": TRIANGLE, "square": SQUARE, "circle": CIRCLE}
# color codes (observation channel 2); 0 = none
COLOR_CODE = {c: i + 1 for i, c in enumerate(GRID_COLORS)}

N_TYPE, N_COLOR = 8, 7
VIEW = 7
MAX_STEPS = 100
N_SUBGOALS = 5

ACTIONS = ["up", "left", "right", "down", "pickup", "drop"]
MOVES = {"up": (0, -1), "left": (-1, 0), "right": (1, 0), "down": (0, 1)}
ADJ_SCAN = [(0, -1), (-1, 0), (1, 0), (0, 1)]  # up/left/right/down

WIDTH, HEIGHT = 22, 17
CORRIDOR_Y = 8
ROOM_X0 = [1, 8, 15]
TOP_ROOM_Y = range(1, 7)
BOT_ROOM_Y = range(10, 16)
DOOR_X = [4, 11, 18]
# rooms 0..2 top row, 3..5 bottom row
DOOR_CELLS = [(x, 7) for x in DOOR_X] + [(x, 9) for x in DOOR_X]

N_TRAIN_FULL = 1700  # full-scale training split size over the 3240 quintuples
SPLIT_SHUFFLE_SEED = 20240611


def room_cells(room: int) -> list[tuple[int, int]]:
    x0 = ROOM_X0[room % 3]
    ys = TOP_ROOM_Y if room < 3 else BOT_ROOM_Y
    return [(x, y) for y in ys for x in range(x0, x0 + 6)]


_ROOM_OF = {}
for _r in range(6):
    for _c in room_cells(_r):
        _ROOM_OF[_c] = _r


def room_of(cell) -> int | None:
    return _ROOM_OF.get(tuple(cell))


def is_wall(cell) -> bool:
    x, y = cell
    if not (0 <= x < WIDTH and 0 <= y < HEIGHT):
        return True
    if y == CORRIDOR_Y or room_of(cell) is not None or tuple(cell) in DOOR_CELLS:
        return False
    return True


@dataclass
class Subgoal:
    kind: str  # enter-room | pickup | exit-room | goto-goal
    target: dict
    phrase: str


@dataclass
class GridTask:
    task_id: str
    quintuple: tuple  # (obj room color, obj color, obj shape, goal room color, goal color)
    door_colors: list[str]  # per room index
    objects: list[dict]  # {color, shape, pos}; index 0 is the goal object
    goal_square: dict  # {color, pos}
    decoy_squares: list[dict]
    subgoals: list[Subgoal]
    instruction: str
    agent_start: tuple[int, int]
    split: str

    @property
    def goal_object(self) -> dict:
        return self.objects[0]

    def room_by_color(self, color: str) -> int:
        return self.door_colors.index(color)

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "quintuple": list(self.quintuple),
            "door_colors": self.door_colors,
            "objects": [dict(o, pos=list(o["pos"])) for o in self.objects],
            "goal_square": dict(self.goal_square, pos=list(self.goal_square["pos"])),
            "decoy_squares": [dict(d, pos=list(d["pos"])) for d in self.decoy_squares],
            "subgoals": [{"kind": s.kind, "target": s.target, "phrase": s.phrase}
                         for s in self.subgoals],
            "instruction": self.instruction,
            "agent_start": list(self.agent_start),
            "split": self.split,
        }

    @staticmethod
    def from_json(d: dict) -> "GridTask":
        return GridTask(
            task_id=d["task_id"],
            quintuple=tuple(d["quintuple"]),
            door_colors=list(d["door_colors"]),
            objects=[dict(o, pos=tuple(o["pos"])) for o in d["objects"]],
            goal_square=dict(d["goal_square"], pos=tuple(d["goal_square"]["pos"])),
            decoy_squares=[dict(s, pos=tuple(s["pos"])) for s in d["decoy_squares"]],
            subgoals=[Subgoal(s["kind"], s["target"], s["phrase"])
                      for s in d["subgoals"]],
            instruction=d["instruction"],
            agent_start=tuple(d["agent_start"]),
            split=d["split"],
        )


@dataclass
class GridState:
    agent: tuple[int, int]
    doors_open: tuple[bool, ...]
    object_pos: tuple  # per object: (x, y) or None while held
    held: int | None
    steps: int = 0


def reset(task: GridTask) -> GridState:
    return GridState(agent=task.agent_start,
                     doors_open=(False,) * 6,
                     object_pos=tuple(o["pos"] for o in task.objects),
                     held=None)


def all_quintuples() -> list[tuple]:
    out = []
    for a in GRID_COLORS:
        for b in GRID_COLORS:
            if a == b:
                continue
            for oc in GRID_COLORS:
                for os in GRID_SHAPES:
                    for gc in GRID_COLORS:
                        out.append((a, oc, os, b, gc))
    return out


def split_pools(holdout: list[tuple[str, str]] | None = None) -> dict[str, list[tuple]]:
    """Deterministic train/test pools over the 3240 subgoal quintuples."""
    quints = all_quintuples()
    rng = np.random.default_rng(SPLIT_SHUFFLE_SEED)
    order = rng.permutation(len(quints))
    shuffled = [quints[i] for i in order]
    pools = {"train": shuffled[:N_TRAIN_FULL], "test": shuffled[N_TRAIN_FULL:]}
    if holdout:
        held = set(holdout)
        pools["holdout-object-train"] = [q for q in pools["train"]
                                         if (q[1], q[2]) not in held]
        pools["holdout-object-test"] = [q for q in shuffled
                                        if (q[1], q[2]) in held]
    return pools


def sample_task(seed: int, split: str = "train",
                holdout: list[tuple[str, str]] | None = None,
                vocab: Vocab | None = None) -> GridTask:
    pools = split_pools(holdout)
    if split not in pools:
        raise ValueError(f"unknown split {split!r} (holdout spec missing?)")
    pool = pools[split]
    if not pool:
        raise ValueError(f"split {split!r} is empty")
    rng = np.random.default_rng((seed, 0x6E1D))
    quint = pool[rng.integers(len(pool))]
    return instantiate(quint, seed, split, rng)


def instantiate(quint: tuple, seed: int, split: str,
                rng: np.random.Generator) -> GridTask:
    room_a_color, obj_color, obj_shape, room_b_color, goal_color = quint
    door_colors = [GRID_COLORS[i] for i in rng.permutation(6)]
    room_a = door_colors.index(room_a_color)
    room_b = door_colors.index(room_b_color)

    used: set = set()

    def place(room: int) -> tuple[int, int]:
        cells = [c for c in room_cells(room) if c not in used]
        cell = cells[rng.integers(len(cells))]
        used.add(cell)
        return cell

    objects = [{"color": obj_color, "shape": obj_shape, "pos": place(room_a)}]
    goal_square = {"color": goal_color, "pos": place(room_b)}

    combos = [(c, s) for c in GRID_COLORS for s in GRID_SHAPES
              if (c, s) != (obj_color, obj_shape)]
    for _ in range(int(rng.integers(2, 5))):
        c, s = combos[rng.integers(len(combos))]
        objects.append({"color": c, "shape": s, "pos": place(int(rng.integers(6)))})
    decoy_color = [c for c in GRID_COLORS if c != goal_color][rng.integers(5)]
    decoy_squares = [{"color": decoy_color, "pos": place(int(rng.integers(6)))}]

    subgoals = [
        Subgoal("enter-room", {"room_color": room_a_color},
                f"enter the {room_a_color} room"),
        Subgoal("pickup", {"color": obj_color, "shape": obj_shape},
                f"pick up the {obj_color} {obj_shape}"),
        Subgoal("exit-room", {"room_color": room_a_color},
                f"exit the {room_a_color} room"),
        Subgoal("enter-room", {"room_color": room_b_color},
                f"enter the {room_b_color} room"),
        Subgoal("goto-goal", {"color": goal_color},
                f"go to the {goal_color} goal"),
    ]
    agent_start = (int(rng.integers(1, WIDTH - 1)), CORRIDOR_Y)
    instruction = f"move {obj_color} {obj_shape} to {goal_color} square"
    return GridTask(
        task_id=f"grid-{split}-{seed}",
        quintuple=quint, door_colors=door_colors, objects=objects,
        goal_square=goal_square, decoy_squares=decoy_squares,
        subgoals=subgoals, instruction=instruction,
        agent_start=agent_start, split=split)


def door_index(cell) -> int | None:
    try:
        return DOOR_CELLS.index(tuple(cell))
    except ValueError:
        return None


def step(state: GridState, action: str, task: GridTask) -> GridState:
    """Deterministic transition; invalid actions are no-ops."""
    if state.steps >= MAX_STEPS:
        raise ValueError("trajectory length limit reached")
    agent = state.agent
    doors = state.doors_open
    objs = list(state.object_pos)
    held = state.held
    if action in MOVES:
        dx, dy = MOVES[action]
        nxt = (agent[0] + dx, agent[1] + dy)
        if not is_wall(nxt):
            d = door_index(nxt)
            if d is not None and not doors[d]:
                doors = tuple(o or (i == d) for i, o in enumerate(doors))
            agent = nxt
    elif action == "pickup":
        if held is None:
            for cell in [agent] + [(agent[0] + dx, agent[1] + dy)
                                   for dx, dy in ADJ_SCAN]:
                hit = next((i for i, p in enumerate(objs) if p == cell), None)
                if hit is not None:
                    held = hit
                    objs[hit] = None
                    break
    elif action == "drop":
        if held is not None:
            for cell in [agent] + [(agent[0] + dx, agent[1] + dy)
                                   for dx, dy in ADJ_SCAN]:
                if not is_wall(cell) and door_index(cell) is None \
                        and cell not in objs:
                    objs[held] = cell
                    held = None
                    break
    else:
        raise ValueError(f"unknown action {action!r}")
    return GridState(agent=agent, doors_open=doors, object_pos=tuple(objs),
                     held=held, steps=state.steps + 1)


def cell_content(cell, state: GridState, task: GridTask):
    """(type_code, color_code) of a world cell, ignoring visibility."""
    if is_wall(cell):
        return WALL, 0
    d = door_index(cell)
    if d is not None and not state.doors_open[d]:
        return DOOR_CLOSED, COLOR_CODE[task.door_colors[d]]
    for i, pos in enumerate(state.object_pos):
        if pos == tuple(cell):
            o = task.objects[i]
            return SHAPE_CODE[o["shape"]], COLOR_CODE[o["color"]]
    if tuple(cell) == task.goal_square["pos"]:
        return GOAL, COLOR_CODE[task.goal_square["color"]]
    for sq in task.decoy_squares:
        if tuple(cell) == sq["pos"]:
            return GOAL, COLOR_CODE[sq["color"]]
    return EMPTY, 0


def _passable_for_sight(cell, state: GridState) -> bool:
    if is_wall(cell):
        return False
    d = door_index(cell)
    return d is None or state.doors_open[d]


def visibility_mask(state: GridState) -> np.ndarray:
    """7x7 boolean mask: flood fill from the center through sight-passable
    cells; blocking cells are marked visible when reached but not expanded."""
    ax, ay = state.agent
    mask = np.zeros((VIEW, VIEW), dtype=bool)
    half = VIEW // 2
    stack = [(half, half)]
    mask[half, half] = True
    seen = {(half, half)}
    while stack:
        i, j = stack.pop()
        cell = (ax + j - half, ay + i - half)
        if not _passable_for_sight(cell, state):
            continue
        for di, dj in [(-1, 0), (1, 0), (0, -1), (0, 1)]:
            ni, nj = i + di, j + dj
            if 0 <= ni < VIEW and 0 <= nj < VIEW and (ni, nj) not in seen:
                seen.add((ni, nj))
                mask[ni, nj] = True
                stack.append((ni, nj))
    return mask


def observe(state: GridState, task: GridTask) -> tuple[np.ndarray, int]:
    """Egocentric 7x7x4 integer observation plus the holding flag."""
    ax, ay = state.agent
    half = VIEW // 2
    obs = np.zeros((VIEW, VIEW, 4), dtype=np.int8)
    mask = visibility_mask(state)
    held_type = held_color = 0
    if state.held is not None:
        o = task.objects[state.held]
        held_type = SHAPE_CODE[o["shape"]]
        held_color = COLOR_CODE[o["color"]]
    for i in range(VIEW):
        for j in range(VIEW):
            cell = (ax + j - half, ay + i - half)
            if not (0 <= cell[0] < WIDTH and 0 <= cell[1] < HEIGHT):
                obs[i, j, 0] = WALL
                continue
            if not mask[i, j]:
                continue
            t, c = cell_content(cell, state, task)
            obs[i, j, 0] = t
            obs[i, j, 1] = c
    obs[:, :, 2] = held_type
    obs[:, :, 3] = held_color
    return obs, int(state.held is not None)


_ONE_HOT_WIDTH = 2 * (N_TYPE + N_COLOR)
_ONE_HOT_OFFSETS = np.array([0, N_TYPE, N_TYPE + N_COLOR, 2 * N_TYPE + N_COLOR],
                            dtype=np.int64)


def one_hot_obs(obs: np.ndarray, holding: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expand integer observations (..., 7, 7, 4) to one-hot (..., 7, 7, 30)."""
    obs = np.asarray(obs)
    flat = obs.reshape(-1, 4).astype(np.int64) + _ONE_HOT_OFFSETS
    oh = np.zeros((flat.shape[0], _ONE_HOT_WIDTH), dtype=np.float32)
    np.put_along_axis(oh, flat, 1.0, axis=1)
    oh = oh.reshape(*obs.shape[:-1], _ONE_HOT_WIDTH)
    return oh, np.asarray(holding, dtype=np.float32).reshape(*obs.shape[:-3], 1)


def subgoal_satisfied(sg: Subgoal, state: GridState, task: GridTask) -> bool:
    if sg.kind == "enter-room":
        return room_of(state.agent) == task.room_by_color(sg.target["room_color"])
    if sg.kind == "pickup":
        return state.held == 0
    if sg.kind == "exit-room":
        return room_of(state.agent) != task.room_by_color(sg.target["room_color"])
    if sg.kind == "goto-goal":
        return state.agent == task.goal_square["pos"] and state.held == 0
    raise ValueError(sg.kind)


@dataclass
class SubgoalProgress:
    completed: int
    first_failed: int | None  # subgoal index, None when all done
    rate: float
    done: bool
    first_failed_phrase: str | None
    agent_pos: tuple[int, int]
    target_door: tuple[int, int]
    right_room: bool
    held_kind: str  # none | right | wrong


def subgoal_target_cell(sg: Subgoal, state: GridState, task: GridTask):
    """Cell the next subgoal points at (for rewards and corrections)."""
    if sg.kind in ("enter-room", "exit-room"):
        return DOOR_CELLS[task.room_by_color(sg.target["room_color"])]
    if sg.kind == "pickup":
        pos = state.object_pos[0]
        return pos if pos is not None else state.agent
    return task.goal_square["pos"]


def completed_prefix(states: list[GridState], task: GridTask) -> int:
    """Largest k such that subgoals 1..k were satisfied in order."""
    k = 0
    for st in states:
        while k < N_SUBGOALS and subgoal_satisfied(task.subgoals[k], st, task):
            k += 1
        if k == N_SUBGOALS:
            break
    return k


def subgoal_progress(states: list[GridState], task: GridTask) -> SubgoalProgress:
    k = completed_prefix(states, task)
    final = states[-1]
    done = k == N_SUBGOALS
    if done:
        return SubgoalProgress(k, None, 1.0, True, None, final.agent,
                               final.agent, True, "right")
    sg = task.subgoals[k]
    # the room the failed subgoal's target lives in, for directional/binary
    if sg.kind in ("enter-room", "exit-room"):
        target_room = task.room_by_color(sg.target["room_color"])
    elif sg.kind == "pickup":
        pos = final.object_pos[0] or final.agent
        target_room = room_of(pos)
    else:
        target_room = room_of(task.goal_square["pos"])
    target_door = DOOR_CELLS[target_room] if target_room is not None \
        else task.goal_square["pos"]
    if sg.kind == "exit-room":
        right_room = room_of(final.agent) is None
    else:
        right_room = room_of(final.agent) == target_room
    if final.held is None:
        held_kind = "none"
    else:
        held_kind = "right" if final.held == 0 else "wrong"
    return SubgoalProgress(k, k, k / N_SUBGOALS, False, sg.phrase,
                           final.agent, target_door, right_room, held_kind)


class RewardTracker:
    """Dense reward with a next-subgoal pointer: -0.01 * distance to the
    current subgoal target, plus a one-time +100 per newly completed subgoal."""

    def __init__(self, task: GridTask):
        self.task = task
        self.pointer = 0

    def reward(self, state: GridState) -> float:
        r = 0.0
        while self.pointer < N_SUBGOALS and \
                subgoal_satisfied(self.task.subgoals[self.pointer], state, self.task):
            self.pointer += 1
            r += 100.0
        if self.pointer < N_SUBGOALS:
            tgt = subgoal_target_cell(self.task.subgoals[self.pointer], state, self.task)
            r -= 0.01 * float(np.hypot(state.agent[0] - tgt[0],
                                       state.agent[1] - tgt[1]))
        return r


def render_payload(state: GridState, task: GridTask) -> dict:
    """Full-grid snapshot for the console renderer."""
    grid = []
    for y in range(HEIGHT):
        row = []
        for x in range(WIDTH):
            t, c = cell_content((x, y), state, task)
            row.append([int(t), int(c)])
        grid.append(row)
    return {
        "kind": "grid",
        "width": WIDTH,
        "height": HEIGHT,
        "grid": grid,
        "agent": list(state.agent),
        "held": None if state.held is None else dict(task.objects[state.held],
                                                     pos=None),
        "doors_open": list(state.doors_open),
    }


def save_tasks(tasks: list[GridTask], path) -> None:
    with open(path, "w") as f:
        for t in tasks:
            f.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def load_tasks(path) -> list[GridTask]:
    with open(path) as f:
        return [GridTask.from_json(json.loads(line)) for line in f if line.strip()]
