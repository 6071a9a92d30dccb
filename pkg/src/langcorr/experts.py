"""Scripted near-optimal policies used to label states during meta-training.

Grid: shortest-path navigation over the full known map via cached BFS
distance fields (closed doors are traversable, since moving into one opens
it). Pusher: a phase controller that positions the gripper behind the goal
block and pushes it along a Dijkstra distance field around the fixed
obstacles.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from . import gridworld as gw
from . import pusher as pu


class ExpertError(RuntimeError):
    pass


# ---------------------------------------------------------------- grid

_grid_fields: dict = {}


def _grid_distance_field(target: tuple[int, int]) -> np.ndarray:
    """BFS distances to target over passable cells (doors count as open)."""
    if target in _grid_fields:
        return _grid_fields[target]
    dist = np.full((gw.WIDTH, gw.HEIGHT), np.inf)
    dist[target] = 0
    queue = [target]
    while queue:
        nxt = []
        for (x, y) in queue:
            for dx, dy in gw.ADJ_SCAN:
                n = (x + dx, y + dy)
                if not gw.is_wall(n) and dist[n] == np.inf:
                    dist[n] = dist[x, y] + 1
                    nxt.append(n)
        queue = nxt
    _grid_fields[target] = dist
    return dist


def grid_expert(state: gw.GridState, task: gw.GridTask) -> str:
    """Next near-optimal action: fetch the goal object, deliver it."""
    if state.held is not None and state.held != 0:
        return "drop"
    if state.held == 0:
        target = task.goal_square["pos"]
        if state.agent == target:
            return "drop"  # task already complete; any action is fine
    else:
        target = state.object_pos[0]
        if state.agent == target:
            return "pickup"
    dist = _grid_distance_field(tuple(target))
    here = dist[state.agent]
    if not np.isfinite(here):
        raise ExpertError(f"target {target} unreachable from {state.agent}")
    for action, (dx, dy) in gw.MOVES.items():
        n = (state.agent[0] + dx, state.agent[1] + dy)
        if not gw.is_wall(n) and dist[n] == here - 1:
            return action
    raise ExpertError("no descending move found")


def grid_expert_rollout(task: gw.GridTask, max_steps: int = gw.MAX_STEPS):
    """Full expert episode; returns (states, actions)."""
    state = gw.reset(task)
    states = [state]
    actions = []
    for _ in range(max_steps):
        if gw.completed_prefix(states, task) == gw.N_SUBGOALS:
            break
        a = grid_expert(state, task)
        actions.append(a)
        state = gw.step(state, a, task)
        states.append(state)
    return states, actions


# ---------------------------------------------------------------- pusher

_RES = 0.1
_N = int(pu.WORKSPACE / _RES)
# clearance the block needs from a fixed block, plus a small planning margin
_BLOCK_CLEARANCE = 2 * pu.BLOCK_R + 0.1
_PUSH_OFFSET = 1.05 * (pu.GRIPPER_R + pu.BLOCK_R)

_pusher_fields: dict = {}


def _cell(p) -> tuple[int, int]:
    return (int(np.clip(p[0] / _RES, 0, _N - 1)),
            int(np.clip(p[1] / _RES, 0, _N - 1)))


def _pusher_distance_field(task: pu.PusherTask) -> np.ndarray:
    """Dijkstra distances (8-connected) from the target over block-free cells."""
    key = task.task_id, tuple(task.target)
    if key in _pusher_fields:
        return _pusher_fields[key]
    xs = (np.arange(_N) + 0.5) * _RES
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    free = (gx > pu.BLOCK_R) & (gx < pu.WORKSPACE - pu.BLOCK_R) & \
           (gy > pu.BLOCK_R) & (gy < pu.WORKSPACE - pu.BLOCK_R)
    for f in task.fixed_pos:
        free &= (gx - f[0]) ** 2 + (gy - f[1]) ** 2 >= _BLOCK_CLEARANCE ** 2
    dist = np.full((_N, _N), np.inf)
    start = _cell(task.target)
    if not free[start]:
        # target may sit close to an obstacle; seed from the nearest free cell
        fi, fj = np.nonzero(free)
        k = np.argmin((fi - start[0]) ** 2 + (fj - start[1]) ** 2)
        start = (int(fi[k]), int(fj[k]))
    dist[start] = 0.0
    pq = [(0.0, start)]
    steps = [(di, dj, math.hypot(di, dj))
             for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    while pq:
        d, (i, j) = heapq.heappop(pq)
        if d > dist[i, j]:
            continue
        for di, dj, w in steps:
            ni, nj = i + di, j + dj
            if 0 <= ni < _N and 0 <= nj < _N and free[ni, nj]:
                nd = d + w
                if nd < dist[ni, nj]:
                    dist[ni, nj] = nd
                    heapq.heappush(pq, (nd, (ni, nj)))
    _pusher_fields[key] = dist
    return dist


def _waypoint(block: np.ndarray, task: pu.PusherTask,
              lookahead: int = 10) -> np.ndarray:
    dist = _pusher_distance_field(task)
    i, j = _cell(block)
    if not np.isfinite(dist[i, j]):
        fi, fj = np.nonzero(np.isfinite(dist))
        k = np.argmin((fi - i) ** 2 + (fj - j) ** 2)
        i, j = int(fi[k]), int(fj[k])
    for _ in range(lookahead):
        if dist[i, j] == 0.0:
            break
        best = None
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ni, nj = i + di, j + dj
                if 0 <= ni < _N and 0 <= nj < _N and dist[ni, nj] < dist[i, j]:
                    if best is None or dist[ni, nj] < dist[best]:
                        best = (ni, nj)
        if best is None:
            break
        i, j = best
    if dist[i, j] == 0.0:
        return task.target.copy()
    return np.array([(i + 0.5) * _RES, (j + 0.5) * _RES])


def _steer(state: pu.PusherState, point: np.ndarray) -> str:
    """Cardinal force best aligned with reaching the point, velocity-damped."""
    want = (point - state.gripper) - 0.15 * state.velocity
    best, best_dot = "up", -np.inf
    for a in pu.ACTIONS:
        d = float(np.dot(pu.FORCE_VECS[a], want))
        if d > best_dot:
            best, best_dot = a, d
    return best


def pusher_expert(state: pu.PusherState, task: pu.PusherTask) -> str:
    block = state.movable[task.goal_block]
    if float(np.hypot(*(block - task.target))) <= pu.SUCCESS_RADIUS:
        return _steer(state, block)  # done: hold position near the block
    wp = _waypoint(block, task)
    push_dir = wp - block
    n = float(np.hypot(*push_dir))
    if n < 1e-9:
        push_dir = task.target - block
        n = max(float(np.hypot(*push_dir)), 1e-9)
    push_dir = push_dir / n
    behind = block - push_dir * _PUSH_OFFSET
    to_behind = behind - state.gripper
    rel = state.gripper - block
    rel_dist = float(np.hypot(*rel))
    aligned = float(np.dot(-rel / max(rel_dist, 1e-9), push_dir)) > 0.85
    if aligned and rel_dist < _PUSH_OFFSET + 0.3:
        # push phase: drive slightly into the block along the push direction
        return _steer(state, block - push_dir * 0.4 * _PUSH_OFFSET)
    if float(np.hypot(*to_behind)) > 0.2 and rel_dist < _PUSH_OFFSET + 0.25:
        # too close on the wrong side: orbit around the block
        tangent = np.array([-rel[1], rel[0]]) / max(rel_dist, 1e-9)
        if float(np.dot(tangent, to_behind)) < 0:
            tangent = -tangent
        orbit = block + rel / max(rel_dist, 1e-9) * (_PUSH_OFFSET + 0.35)
        return _steer(state, orbit + tangent * 0.6)
    return _steer(state, behind)


def pusher_expert_rollout(task: pu.PusherTask, max_steps: int = pu.MAX_STEPS):
    state = pu.reset(task)
    states = [state]
    actions = []
    for _ in range(max_steps):
        if pu.is_success(state, task):
            break
        a = pusher_expert(state, task)
        actions.append(a)
        state = pu.step(state, a, task)
        states.append(state)
    return states, actions
