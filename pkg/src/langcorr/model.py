"""The instruction/correction/policy network and its batched forward pass.

The instruction module embeds the task phrase; the correction module
encodes each (previous trajectory, correction) round and mean-pools the
per-round fusion vectors; the policy module maps (state, instruction
vector, pooled correction vector) to an action distribution. Ablation and
baseline variants are switched by ModelConfig flags.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import gridworld as gw
from .language import MAX_LEN
from .nn import ParamStore, add_mlp, mlp

FULL_INFO_INSTR_LEN = 30  # five concatenated subgoal phrases
EMBED_DIM = 16

GRID_TRAJ_STEPS = [0, 25, 50, 75]
PUSHER_TRAJ_STEPS = [0, 70, 140, 210, 280]


@dataclass
class ModelConfig:
    domain: str  # grid | pusher
    vocab_size: int
    no_instruction: bool = False
    no_trajectory: bool = False
    immediate_only: bool = False
    gpr_mode: bool = False
    full_info: bool = False
    c_max: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.domain not in ("grid", "pusher"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.full_info and (self.gpr_mode or self.immediate_only):
            raise ValueError("full_info excludes correction-input flags")

    @property
    def n_actions(self) -> int:
        return 6 if self.domain == "grid" else 4

    @property
    def instr_len(self) -> int:
        return FULL_INFO_INSTR_LEN if (self.full_info and self.domain == "grid") \
            else MAX_LEN

    @property
    def traj_len(self) -> int:
        return len(GRID_TRAJ_STEPS) if self.domain == "grid" \
            else len(PUSHER_TRAJ_STEPS)

    @property
    def z_im_dim(self) -> int:
        base = 32 if self.domain == "grid" else 16
        if self.full_info and self.domain == "pusher":
            return base + 2  # exact target coordinates appended
        return base

    @property
    def text_enc_dim(self) -> int:
        return 4 if self.domain == "grid" else 16

    @property
    def traj_enc_dim(self) -> int:
        return 4 if self.domain == "grid" else 8

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)

    def fingerprint(self) -> str:
        raw = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(raw).hexdigest()[:16]


def build_params(cfg: ModelConfig) -> ParamStore:
    """All trainable weights, shapes fixed by the domain architecture."""
    store = ParamStore(cfg.seed)
    V, E = cfg.vocab_size, EMBED_DIM
    store.add("embed", (V, E), E, E)

    def conv1d_block(name, cin, filters):
        store.add(f"{name}.w", (2 * cin, filters), 2 * cin, filters)
        store.add_zeros(f"{name}.b", (filters,))

    def conv2d_block(name, cin, filters):
        store.add(f"{name}.w", (4 * cin, filters), 4 * cin, filters)
        store.add_zeros(f"{name}.b", (filters,))

    # instruction module: embed -> 1D CNN(4,2,1) -> MLP
    conv1d_block("instr.conv", E, 4)
    instr_flat = (cfg.instr_len - 1) * 4
    add_mlp(store, "instr.mlp", instr_flat,
            [16, 32] if cfg.domain == "grid" else [16, 16])

    # correction module: per-round trajectory and text encoders + fusion
    if cfg.domain == "grid":
        conv2d_block("traj.cnn0", gw.N_TYPE + gw.N_COLOR + gw.N_TYPE + gw.N_COLOR, 4)
        conv2d_block("traj.cnn1", 4, 4)
        add_mlp(store, "traj.state_mlp", 5 * 5 * 4 + 1, [32, 32])
        conv1d_block("traj.seq_conv", 32, 4)
        add_mlp(store, "traj.seq_mlp", (cfg.traj_len - 1) * 4, [16, 4])
    else:
        conv1d_block("traj.seq_conv", 19, 8)
        add_mlp(store, "traj.seq_mlp", (cfg.traj_len - 1) * 8, [16, 8])
    if cfg.gpr_mode:
        add_mlp(store, "corr.scalar_mlp", 1, [16, cfg.text_enc_dim])
    else:
        conv1d_block("corr.conv", E, 4)
        add_mlp(store, "corr.mlp", (MAX_LEN - 1) * 4, [16, cfg.text_enc_dim])
    add_mlp(store, "fusion", cfg.traj_enc_dim + cfg.text_enc_dim, [32, 32])

    # policy module
    if cfg.domain == "grid":
        conv2d_block("policy.cnn0", gw.N_TYPE + gw.N_COLOR + gw.N_TYPE + gw.N_COLOR, 8)
        conv2d_block("policy.cnn1", 8, 8)
        add_mlp(store, "policy.state_mlp", 5 * 5 * 8 + 1, [32, 32])
        head_in = 32 + 32 + cfg.z_im_dim
        add_mlp(store, "policy.head", head_in, [64, 64])
        store.add("policy.out.w", (6, 64), 64, 6)
        store.add_zeros("policy.out.b", (6,))
    else:
        head_in = 19 + 32 + cfg.z_im_dim
        add_mlp(store, "policy.head", head_in, [256, 256, 256])
        store.add("policy.out.w", (4, 256), 256, 4)
        store.add_zeros("policy.out.b", (4,))
    return store


def _conv2d(x, leaves, name):
    return ad.relu(ad.conv2d(x, leaves[f"{name}.w"], leaves[f"{name}.b"], (2, 2)))


def _conv1d(x, leaves, name):
    return ad.relu(ad.conv1d(x, leaves[f"{name}.w"], leaves[f"{name}.b"], 2))


def _flatten(x):
    return ad.reshape(x, (x.shape[0], -1))


def encode_instruction(leaves, cfg: ModelConfig, instr_tokens: np.ndarray,
                       coords: np.ndarray | None = None) -> ad.Var:
    """z_im for a batch of token sequences (B, instr_len)."""
    B = instr_tokens.shape[0]
    if cfg.no_instruction:
        z = ad.Var(np.zeros((B, 32 if cfg.domain == "grid" else 16),
                            dtype=np.float32))
    else:
        e = ad.embedding(leaves["embed"], instr_tokens)
        h = _flatten(_conv1d(e, leaves, "instr.conv"))
        z = mlp(h, leaves, "instr.mlp")
    if cfg.full_info and cfg.domain == "pusher":
        z = ad.concat([z, ad.Var(np.asarray(coords, dtype=leaves["embed"].data.dtype))])
    return z


def encode_rounds(leaves, cfg: ModelConfig, rounds: dict,
                  n_segments: int) -> ad.Var:
    """z_cm: mean over each sample's correction rounds (segment ids group
    the flattened rounds back to samples).

    rounds keys: grid traj_obs (R,T,7,7,30) + traj_hold (R,T,1), pusher
    traj_states (R,T,19); corr_tokens (R,10) or corr_scalars (R,1); seg_ids.
    """
    seg_ids = rounds["seg_ids"]
    R = len(seg_ids)
    dtype = leaves["embed"].data.dtype
    # trajectory branch
    if cfg.domain == "grid":
        obs = np.asarray(rounds["traj_obs"], dtype=dtype)
        hold = np.asarray(rounds["traj_hold"], dtype=dtype)
        if cfg.no_trajectory:
            obs = np.zeros_like(obs)
            hold = np.zeros_like(hold)
        T = obs.shape[1]
        x = ad.Var(obs.reshape(R * T, *obs.shape[2:]))
        h = _conv2d(_conv2d(x, leaves, "traj.cnn0"), leaves, "traj.cnn1")
        h = ad.concat([_flatten(h), ad.Var(hold.reshape(R * T, 1))])
        h = mlp(h, leaves, "traj.state_mlp")
        seq = ad.reshape(h, (R, T, 32))
    else:
        states = np.asarray(rounds["traj_states"], dtype=dtype)
        if cfg.no_trajectory:
            states = np.zeros_like(states)
        seq = ad.Var(states * 0.1)  # normalize workspace coords to ~[0, 1]
    h = _flatten(_conv1d(seq, leaves, "traj.seq_conv"))
    traj_vec = mlp(h, leaves, "traj.seq_mlp")
    # correction branch
    if cfg.gpr_mode:
        scal = ad.Var(np.asarray(rounds["corr_scalars"], dtype=dtype).reshape(R, 1))
        corr_vec = mlp(scal, leaves, "corr.scalar_mlp")
    else:
        e = ad.embedding(leaves["embed"], rounds["corr_tokens"])
        h = _flatten(_conv1d(e, leaves, "corr.conv"))
        corr_vec = mlp(h, leaves, "corr.mlp")
    fused = mlp(ad.concat([traj_vec, corr_vec]), leaves, "fusion")
    return ad.segment_mean(fused, seg_ids, n_segments)


def policy_logits(leaves, cfg: ModelConfig, obs: dict,
                  z_im: ad.Var, z_cm: ad.Var) -> ad.Var:
    dtype = leaves["embed"].data.dtype
    if cfg.domain == "grid":
        x = ad.Var(np.asarray(obs["grid"], dtype=dtype))
        h = _conv2d(_conv2d(x, leaves, "policy.cnn0"), leaves, "policy.cnn1")
        h = ad.concat([_flatten(h), ad.Var(np.asarray(obs["hold"], dtype=dtype))])
        s = mlp(h, leaves, "policy.state_mlp")
    else:
        s = ad.Var(np.asarray(obs["state"], dtype=dtype) * 0.1)
    h = mlp(ad.concat([s, z_cm, z_im]), leaves, "policy.head")
    return ad.affine(h, leaves["policy.out.w"], leaves["policy.out.b"])


def forward(leaves, cfg: ModelConfig, batch: dict) -> ad.Var:
    """Logits for a full training batch (contexts encoded in-graph)."""
    B = batch["instr_tokens"].shape[0]
    z_im = encode_instruction(leaves, cfg, batch["instr_tokens"],
                              batch.get("coords"))
    z_cm = encode_rounds(leaves, cfg, batch["rounds"], B)
    return policy_logits(leaves, cfg, batch["obs"], z_im, z_cm)


def action_probs(store: ParamStore, cfg: ModelConfig, batch: dict) -> np.ndarray:
    logits = forward(store.as_vars(), cfg, batch)
    return ad.softmax(logits.data)


def train_batch(store: ParamStore, adam, cfg: ModelConfig, batch: dict,
                actions: np.ndarray) -> float:
    """One Adam step on the mean NLL of the expert actions; returns the
    pre-step loss."""
    from .nn import adam_update
    leaves = store.as_vars()
    logits = forward(leaves, cfg, batch)
    loss, _ = ad.softmax_cross_entropy(logits, actions)
    if not np.isfinite(loss.data):
        raise FloatingPointError(
            f"non-finite loss on batch of {len(actions)} samples "
            f"(instr fingerprint {hashlib.sha256(batch['instr_tokens'].tobytes()).hexdigest()[:12]})")
    loss.backward()
    store.collect_grads(leaves)
    adam_update(store, adam)
    return float(loss.data)
