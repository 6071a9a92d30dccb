"""Build untrained checkpoints and offline reference numbers for the
frontend integration tests."""

import json
import sys
from pathlib import Path

import langcorr.checkpoint as ckpt
import langcorr.gridworld as gw
import langcorr.metaloop as ml
import langcorr.model as mdl
import langcorr.runs as runs
from langcorr.config import RunConfig
from langcorr.nn import AdamState
from langcorr.service import MAX_ROUNDS

OFFLINE_TASK_SEED = 3


def main(out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stores = {}
    for domain in ("grid", "pusher"):
        cfg = RunConfig(domain=domain, seed=1)
        model_cfg = runs.make_model_config(cfg)
        store = mdl.build_params(model_cfg)
        ckpt.save(out / f"{domain}.ckpt", store, AdamState(store),
                  runs.checkpoint_config(cfg, model_cfg))
        stores[domain] = (store, model_cfg)

    # offline evaluation of the grid checkpoint on the session task; the
    # all-auto browser session must reproduce these numbers exactly
    store, model_cfg = stores["grid"]
    task = gw.sample_task(OFFLINE_TASK_SEED, "test")
    corr_fn = ml.make_correction_fn("grid")
    completions, _ = ml.meta_test(store, model_cfg, [task], corr_fn,
                                  c_max=MAX_ROUNDS - 1, seed=OFFLINE_TASK_SEED)
    (out / "offline-grid.json").write_text(json.dumps({
        "task_seed": OFFLINE_TASK_SEED,
        "task_id": task.task_id,
        "completions": [float(x) for x in completions[0]],
    }, indent=2))
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main(sys.argv[1])
