"""
Auditing reward fairness
========================

Every block rewards the validators whose COMMIT messages reached its
proposer.  A validator whose commit is consistently slow is never
rewarded under a fixed commit window.  A window that grows with missed
commits, combined with the f+1 attestation filter, catches up once the
window covers the delay.  Under asynchrony no mechanism catches up.
"""
from tendersim import from_dict, load_scenario, run_config

for mech in ("ORIGINAL", "MODULABLE_F1FILTER"):
    run = run_config(load_scenario("fairness_violation", mechanism=mech))
    a = run.report["fairness"]
    print(f"{mech:20} {a['verdict']:28} violated at {a['condition4']['violations']} "
          f"of {a['audited_heights']} heights")

# %%
# The modulable window per height, next to the injected delay of 10 ticks.
traj = run.report["timeout_commit"]
print({int(h): v for h, v in list(traj.items())[:12]})

# %%
# Synchrony with delayed rewards is fair at every height.
fair = run_config(from_dict({"protocol": "repeated", "n": 4, "mechanism": "DELAYED(x=1)",
                             "network": {"mode": "SYNCHRONOUS", "delta": 2},
                             "timeouts": {"commit": 4}, "horizon": {"heights": 50, "time": 10**6}}))
print("DELAYED(x=1), synchronous:", fair.report["fairness"]["verdict"])

# %%
# An asynchronous scheduler that never delivers one commit per height wins
# against every mechanism, with no Byzantine process at all.
for mech in ("ORIGINAL", "MODULABLE", "MODULABLE_F1FILTER", "DELAYED(x=1)"):
    run = run_config(from_dict({
        "protocol": "repeated", "n": 4, "mechanism": mech,
        "network": {"mode": "ASYNCHRONOUS", "delta": 2, "max_pre_gst_delay": 2},
        "timeouts": {"commit": 4}, "fairness": {"slow_commit": {"delay": None}},
        "horizon": {"heights": 50, "time": 100000}}))
    print(f"async {mech:20}", run.report["fairness"]["verdict"])
