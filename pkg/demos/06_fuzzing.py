"""
Seeded fuzz campaigns
=====================

A campaign maps every seed to a run configuration (size, network mode,
timeouts, Byzantine strategy mix) and checks every property on the trace.
The same seeds always give the same summary.
"""
import yaml

from tendersim.harness import campaign_from_dict, campaign_path, derive_run, fuzz

safety = campaign_from_dict(yaml.safe_load(campaign_path("safety").read_text()))
print("seed 7 runs:", {k: v for k, v in derive_run(safety, 7).items()
                       if k in ("n", "byzantine", "network", "strategy", "step_timers")})

s = fuzz(safety, range(1, 101))
print(f"corrected rules: {s['runs']} runs, {s['safety_violations']} safety violations, "
      f"{s['assumption_t_runs']} runs with a post-GST T round")

# %%
# The legacy campaign pits the old unlock rule against an adversary that
# baits same-block unlocks.  It finds Agreement violations, each saved as a
# reproducer config.
legacy = campaign_from_dict(yaml.safe_load(campaign_path("legacy_targeted").read_text()))
s = fuzz(legacy, range(1, 201))
print("legacy rules:", s["violations"])
print("first failing seeds:", [f["seed"] for f in s["failures"]][:5])
