"""Run-directory drivers: task-set generation, training, evaluation.

A run directory is reproducible from its persisted config alone:
config.txt, task-set JSON-lines files, one checkpoint per outer iteration,
train_log.jsonl, metrics.csv, report.json.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from . import checkpoint as ckpt
from . import gridworld as gw
from . import language as lang
from . import metaloop as ml
from . import model as mdl
from . import pusher as pu
from .config import RunConfig

log = logging.getLogger(__name__)

SUITES = ("main", "ablations", "extrapolation", "correction-types", "holdout")
EXTRAPOLATION_COUNTS = (5, 7, 10)


def domain_vocab(domain: str) -> lang.Vocab:
    return lang.grid_vocab() if domain == "grid" else lang.pusher_vocab()


def make_model_config(cfg: RunConfig) -> mdl.ModelConfig:
    return mdl.ModelConfig(domain=cfg.domain,
                           vocab_size=len(domain_vocab(cfg.domain)),
                           c_max=cfg.c_max, seed=cfg.seed,
                           **cfg.model_flags())


def generate_tasks(cfg: RunConfig, split: str, count: int):
    holdout = cfg.holdout_pairs() or None
    vocab = domain_vocab(cfg.domain)
    tasks, seen = [], set()
    offset = 0
    while len(tasks) < count:
        seed = (cfg.seed, 0x7A5C, 0 if split == "train" else 1,
                len(tasks) + offset)
        if cfg.domain == "grid":
            t = gw.sample_task(seed, split, holdout=holdout, vocab=vocab)
        else:
            t = pu.sample_task(seed, split)
        if t.task_id in seen:
            offset += 1
            continue
        seen.add(t.task_id)
        tasks.append(t)
    return tasks


def write_task_files(cfg: RunConfig, out_dir: Path) -> tuple[Path, Path]:
    """Task-set files for a run: copied from configured paths or generated."""
    out_dir.mkdir(parents=True, exist_ok=True)
    mod = gw if cfg.domain == "grid" else pu
    paths = []
    for split, configured, count in (("train", cfg.train_tasks, cfg.n_train),
                                     ("test", cfg.test_tasks, cfg.n_test)):
        dst = out_dir / f"{split}_tasks.jsonl"
        if configured:
            tasks = mod.load_tasks(configured)
            if len(tasks) < count:
                raise ValueError(f"{configured}: {len(tasks)} tasks < {split} "
                                 f"count {count}")
            tasks = tasks[:count]
        else:
            tasks = generate_tasks(cfg, split, count)
        mod.save_tasks(tasks, dst)
        paths.append(dst)
    train_ids = {t.task_id for t in mod.load_tasks(paths[0])}
    test_ids = {t.task_id for t in mod.load_tasks(paths[1])}
    if train_ids & test_ids:
        raise ValueError(f"train/test task sets overlap: {train_ids & test_ids}")
    return paths[0], paths[1]


def checkpoint_config(cfg: RunConfig, model_cfg: mdl.ModelConfig) -> dict:
    d = model_cfg.to_dict()
    d["correction_mode"] = cfg.correction_mode
    d["fingerprint"] = model_cfg.fingerprint()
    return d


def train_run(cfg: RunConfig) -> Path:
    """Full meta-training run; returns the run directory."""
    if not cfg.out_dir:
        raise ValueError("out_dir is required for training")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    train_path, test_path = write_task_files(cfg, out)
    mod = gw if cfg.domain == "grid" else pu
    tasks = mod.load_tasks(train_path)
    model_cfg = make_model_config(cfg)
    vocab = domain_vocab(cfg.domain)
    corr_fn = ml.make_correction_fn(cfg.domain, mode=cfg.correction_mode,
                                    gpr=cfg.gpr_mode, vocab=vocab)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    log_f = open(out / "train_log.jsonl", "w")

    def log_cb(entry):
        log_f.write(json.dumps(entry, sort_keys=True) + "\n")
        log_f.flush()

    def on_iteration(it, store, adam, entry):
        ckpt.save(ckpt_dir / f"iter_{it:03d}.ckpt", store, adam,
                  checkpoint_config(cfg, model_cfg))
        log_cb({"event": "iteration", **entry})

    try:
        store, adam, buffer, history = ml.meta_train(
            model_cfg, tasks, corr_fn, cfg.iterations, cfg.seed,
            vocab=vocab, log_cb=log_cb, on_iteration=on_iteration)
    finally:
        log_f.close()
    ckpt.save(out / "final.ckpt", store, adam, checkpoint_config(cfg, model_cfg))
    summary = {"iterations": cfg.iterations, "buffer_size": buffer.size,
               "evicted": buffer.evicted, "history": history,
               "fingerprint": model_cfg.fingerprint()}
    (out / "train_summary.json").write_text(json.dumps(summary, indent=2,
                                                       sort_keys=True))
    return out


def load_checkpoint(path):
    """(store, adam, model config, correction mode) from a checkpoint file."""
    store, adam, conf = ckpt.load(path)
    model_cfg = mdl.ModelConfig.from_dict(
        {k: v for k, v in conf.items()
         if k not in ("correction_mode", "fingerprint")})
    return store, adam, model_cfg, conf.get("correction_mode", "subgoal")


def eval_run(checkpoint_path, suite: str, tasks_path, seed: int,
             out_csv, c_max: int | None = None,
             correction_mode: str | None = None,
             out_json=None) -> ml.EvalReport:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; options: {SUITES}")
    store, _, model_cfg, trained_mode = load_checkpoint(checkpoint_path)
    mod = gw if model_cfg.domain == "grid" else pu
    tasks = mod.load_tasks(tasks_path)
    mode = correction_mode or trained_mode
    rounds = c_max if c_max is not None else \
        (max(EXTRAPOLATION_COUNTS) if suite == "extrapolation" else model_cfg.c_max)
    report = ml.evaluate_suite(store, model_cfg, suite, tasks, rounds, seed,
                               corr_mode=mode)
    if suite == "extrapolation":
        keep = [c for c in EXTRAPOLATION_COUNTS if c <= rounds]
        report.completions = report.completions[:, keep]
        rows = report.rows()
        for row, count in zip(rows, keep):
            row["correction_count"] = count
        _write_rows(out_csv, rows)
    else:
        ml.write_metrics_csv(out_csv, [report])
    if out_json:
        ml.write_report_json(out_json, [report])
    return report


def _write_rows(path, rows):
    import csv
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=ml.METRICS_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow(row)


ABLATION_MATRIX = (
    ("base", {}),
    ("no_instruction", {"no_instruction": True}),
    ("no_trajectory", {"no_trajectory": True}),
    ("immediate_only", {"immediate_only": True}),
)


def ablate_run(cfg: RunConfig) -> Path:
    """Train the ablation flag matrix as sub-runs of out_dir."""
    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for name, flags in ABLATION_MATRIX:
        sub = dict(cfg.__dict__)
        sub.update(flags)
        sub["out_dir"] = str(root / name)
        sub_cfg = RunConfig(**sub)
        log.info("ablation %s -> %s", name, sub_cfg.out_dir)
        train_run(sub_cfg)
    return root


def inspect_checkpoint(path) -> dict:
    store, adam, conf = ckpt.load(path)
    return {
        "path": str(path),
        "n_parameters": int(sum(v.size for v in store.params.values())),
        "n_tensors": len(store.params),
        "adam_step": None if adam is None else int(adam.step),
        "config": conf,
    }
