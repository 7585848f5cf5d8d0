"""
A chain of heights with a rotating validator set
================================================

Repeated consensus runs one-shot consensus per height.  Validators of a
height broadcast COMMIT messages; everyone else adopts a block once enough
matching commits arrive.  With ``stake_rotation`` the validator set is drawn
from the roster at every height, weighted by stake.
"""
from tendersim import from_dict, run_config

cfg = from_dict({
    "protocol": "repeated", "n": 4, "roster": 7, "selector": "stake_rotation",
    "byzantine": [5], "f": 1, "strategy": {"mix": ["equivocate"]}, "seed": 3,
    "network": {"mode": "EVENTUALLY_SYNCHRONOUS", "gst": 20, "delta": 2, "max_pre_gst_delay": 10},
    "timeouts": {"commit": 4}, "horizon": {"heights": 20, "time": 200000},
})
run = run_config(cfg)
for name in ("outputs identical across correct processes", "Validity", "Chain linkage"):
    print(f"{name}: {run.report['status'][name]}")

# %%
# Who validated each height, and who merely adopted the block.
for _r, _t, pid, kind, d in run.trace.records:
    if kind == "height_start" and pid == 1 and d["height"] <= 6:
        print(f"height {d['height']}: validators {d['validators']}")
adopters = sorted({(d["height"], p) for _r, _t, p, k, d in run.trace.records if k == "adopt"})
print("adoptions (height, process):", adopters[:10])
