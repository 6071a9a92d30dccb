"""Closed grammars for instructions and corrections, plus tokenization.

Each domain has a fixed vocabulary derived from the closure of its grammar
terminals (id 0 is PAD). Correction generators are the computational
stand-ins for a human watching a trajectory: they map a progress/analysis
summary to one phrase from the grammar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_LEN = 10
GRAMMAR_VERSION = 1

GRID_COLORS = ["blue", "green", "gray", "purple", "red", "yellow"]
GRID_SHAPES = ["triangle", "square", "circle"]
DIR8_WORDS = ["east", "southeast", "south", "southwest",
              "west", "northwest", "north", "northeast"]

MOVABLE_COLORS = ["red", "yellow", "blue"]
FIXED_COLORS = ["white", "pink", "green", "magenta", "cyan"]
PUSH_DIR_WORDS = ["right", "down right", "down", "down left",
                  "left", "up left", "up", "up right"]
SIDE_WORDS = ["left", "right", "up", "down"]

BINARY_PHRASES = [
    "you are in the wrong room",
    "you are in the right room",
    "you picked the wrong object",
    "you picked the right object",
]

COMPLETE_PHRASE = "task complete"

# "a little" within this residual distance, "a lot" beyond (2 block widths)
LITTLE_LOT_THRESHOLD = 1.6
# "move closer to X" applies when the block ended this much farther from the
# reference block than the target is
CLOSER_MARGIN = 0.3


class VocabError(ValueError):
    pass


class Vocab:
    def __init__(self, words: list[str]):
        if words[0] != "<pad>":
            raise ValueError("vocabulary must reserve index 0 for PAD")
        if len(set(words)) != len(words):
            raise ValueError("duplicate words in vocabulary")
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(words)}

    def __len__(self):
        return len(self.words)


@dataclass
class TokenSeq:
    ids: np.ndarray  # fixed-length int32, PAD-filled
    raw: str

    def __len__(self):
        return int(np.count_nonzero(self.ids))


def tokenize(phrase: str, vocab: Vocab, length: int = MAX_LEN) -> TokenSeq:
    words = phrase.lower().split()
    if len(words) > length:
        raise VocabError(f"phrase longer than {length} tokens: {phrase!r}")
    ids = np.zeros(length, dtype=np.int32)
    for i, w in enumerate(words):
        if w not in vocab.index:
            raise VocabError(f"unknown word {w!r}")
        ids[i] = vocab.index[w]
    return TokenSeq(ids=ids, raw=phrase)


def detokenize(seq: TokenSeq, vocab: Vocab) -> str:
    return " ".join(vocab.words[i] for i in seq.ids if i != 0)


def _closure(templates: list[dict]) -> list[str]:
    """All words any template can emit, in grammar order, de-duplicated."""
    seen = []
    for t in templates:
        for phrase in enumerate_phrases([t]):
            for w in phrase.split():
                if w not in seen:
                    seen.append(w)
    return seen


def enumerate_phrases(templates: list[dict]) -> list[str]:
    out = []
    for t in templates:
        slots = sorted(t.get("slots", {}))
        combos = [{}]
        for s in slots:
            combos = [dict(c, **{s: v}) for c in combos for v in t["slots"][s]]
        for c in combos:
            out.append(t["pattern"].format(**c))
    return out


def grid_templates() -> list[dict]:
    return [
        {"name": "instruction",
         "pattern": "move {color} {shape} to {goal_color} square",
         "slots": {"color": GRID_COLORS, "shape": GRID_SHAPES,
                   "goal_color": GRID_COLORS}},
        {"name": "enter_room", "pattern": "enter the {color} room",
         "slots": {"color": GRID_COLORS}},
        {"name": "pick_up", "pattern": "pick up the {color} {shape}",
         "slots": {"color": GRID_COLORS, "shape": GRID_SHAPES}},
        {"name": "exit_room", "pattern": "exit the {color} room",
         "slots": {"color": GRID_COLORS}},
        {"name": "go_to_goal", "pattern": "go to the {color} goal",
         "slots": {"color": GRID_COLORS}},
        {"name": "directional", "pattern": "goal room is {direction}",
         "slots": {"direction": DIR8_WORDS}},
        {"name": "binary", "pattern": "{phrase}",
         "slots": {"phrase": BINARY_PHRASES}},
        {"name": "complete", "pattern": COMPLETE_PHRASE, "slots": {}},
    ]


def pusher_templates() -> list[dict]:
    return [
        {"name": "instruction", "pattern": "move {color} close to {obstacle}",
         "slots": {"color": MOVABLE_COLORS, "obstacle": FIXED_COLORS}},
        {"name": "directional", "pattern": "move a {magnitude} {direction}",
         "slots": {"magnitude": ["little", "lot"], "direction": PUSH_DIR_WORDS}},
        {"name": "relational_side", "pattern": "move {side} of the {color} block",
         "slots": {"side": SIDE_WORDS, "color": FIXED_COLORS}},
        {"name": "relational_closer", "pattern": "move closer to the {color} block",
         "slots": {"color": FIXED_COLORS}},
        {"name": "touch", "pattern": "touch the {color} block",
         "slots": {"color": MOVABLE_COLORS}},
        {"name": "complete", "pattern": COMPLETE_PHRASE, "slots": {}},
    ]


def grid_vocab() -> Vocab:
    return Vocab(["<pad>"] + _closure(grid_templates()))


def pusher_vocab() -> Vocab:
    return Vocab(["<pad>"] + _closure(pusher_templates()))


def grammar_json(domain: str) -> dict:
    templates = grid_templates() if domain == "grid" else pusher_templates()
    vocab = grid_vocab() if domain == "grid" else pusher_vocab()
    # the instruction template is not a correction the console may compose
    corrections = [t for t in templates if t["name"] != "instruction"]
    return {
        "version": GRAMMAR_VERSION,
        "domain": domain,
        "terminals": vocab.words,
        "templates": corrections,
    }


@dataclass
class CorrectionEvent:
    kind: str  # subgoal | directional8 | binary | dir-magnitude | relational
    #          # | touch-block | gpr-scalar | complete
    text: TokenSeq | None = None
    scalar: float | None = None

    @property
    def done(self) -> bool:
        return self.kind == "complete"


def _complete_event(vocab: Vocab) -> CorrectionEvent:
    return CorrectionEvent(kind="complete", text=tokenize(COMPLETE_PHRASE, vocab))


def dir8_word(dx: float, dy: float) -> str:
    """8-sector compass word for a displacement; y grows downward (south)."""
    angle = math.atan2(dy, dx)  # 0 = east, pi/2 = south
    sector = int(round(angle / (math.pi / 4))) % 8
    return DIR8_WORDS[sector]


def push_dir_words(dx: float, dy: float) -> str:
    """Direction words for pusher corrections; y grows upward here."""
    angle = math.atan2(-dy, dx)
    sector = int(round(angle / (math.pi / 4))) % 8
    return PUSH_DIR_WORDS[sector]


def gen_grid_instruction(obj_color: str, obj_shape: str, goal_color: str,
                         vocab: Vocab, length: int = MAX_LEN) -> TokenSeq:
    return tokenize(f"move {obj_color} {obj_shape} to {goal_color} square",
                    vocab, length)


def gen_pusher_instruction(block_color: str, obstacle_color: str,
                           vocab: Vocab, length: int = MAX_LEN) -> TokenSeq:
    return tokenize(f"move {block_color} close to {obstacle_color}", vocab, length)


GRID_CORRECTION_MODES = ("subgoal", "directional8", "binary", "mixed")


def grid_correction(progress, mode: str, rng: np.random.Generator,
                    vocab: Vocab) -> CorrectionEvent:
    """Correction for one grid attempt, from a SubgoalProgress summary.

    progress needs: done, first_failed_phrase, agent_pos, target_door,
    right_room, held_kind ('none' | 'right' | 'wrong').
    """
    if progress.done:
        return _complete_event(vocab)
    if mode == "mixed":
        mode = ["subgoal", "directional8", "binary"][rng.integers(3)]
    if mode == "subgoal":
        return CorrectionEvent(kind="subgoal",
                               text=tokenize(progress.first_failed_phrase, vocab))
    if mode == "directional8":
        ax, ay = progress.agent_pos
        tx, ty = progress.target_door
        word = dir8_word(tx - ax, ty - ay)
        return CorrectionEvent(kind="directional8",
                               text=tokenize(f"goal room is {word}", vocab))
    if mode == "binary":
        if progress.held_kind == "wrong":
            phrase = "you picked the wrong object"
        elif progress.right_room:
            phrase = "you are in the right room"
        else:
            phrase = "you are in the wrong room"
        return CorrectionEvent(kind="binary", text=tokenize(phrase, vocab))
    raise ValueError(f"unknown grid correction mode {mode!r}")


def pusher_correction(analysis, rng: np.random.Generator,
                      vocab: Vocab) -> CorrectionEvent:
    """Correction for one pushing attempt, from a PushAnalysis summary.

    analysis needs: done, wrong_block, goal_color, residual (2,),
    ref_color, ref_side, closer_applicable.
    """
    if analysis.done:
        return _complete_event(vocab)
    if analysis.wrong_block:
        return CorrectionEvent(
            kind="touch-block",
            text=tokenize(f"touch the {analysis.goal_color} block", vocab))
    dx, dy = float(analysis.residual[0]), float(analysis.residual[1])
    dist = math.hypot(dx, dy)
    mag = "little" if dist < LITTLE_LOT_THRESHOLD else "lot"
    candidates = [
        ("dir-magnitude", f"move a {mag} {push_dir_words(dx, dy)}"),
        ("relational", f"move {analysis.ref_side} of the {analysis.ref_color} block"),
    ]
    if analysis.closer_applicable:
        candidates.append(
            ("relational", f"move closer to the {analysis.ref_color} block"))
    kind, phrase = candidates[rng.integers(len(candidates))]
    return CorrectionEvent(kind=kind, text=tokenize(phrase, vocab))


def gpr_signal(per_step_rewards) -> CorrectionEvent:
    """Scalar correction: summed dense reward of the attempt, scaled by 1/100."""
    total = float(np.sum(per_step_rewards)) / 100.0
    return CorrectionEvent(kind="gpr-scalar", scalar=total)
