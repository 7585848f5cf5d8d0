"""
A livelock that the corrected rules cannot prevent
==================================================

Termination is conditional.  After GST a correct proposer must not find
too many correct validators locked at rounds at least as high as its own.
The ``livelock`` scenario keeps that condition false forever: a single
Byzantine validator feeds its prevote to exactly one locked validator per
round, and the two locks leapfrog each other.
"""
from tendersim import load_scenario, run_config, t_monitor
from tendersim.properties import round_table

run = run_config(load_scenario("livelock"))
st = run.report["status"]
print("Termination:", st["Termination(bounded)"], "| assumption T:", st["AssumptionT"])

# %%
# End-of-round state (locked, llr, PoLC round) for the first rounds; the
# pattern then repeats with period four up to the horizon.
tab = round_table(run.trace)
for r in range(1, 12):
    print(f"round {r:2}:", dict(sorted(tab[r].items())))

# %%
# Why the monitor never fires after GST: either the proposer is Byzantine
# or a correct validator is locked at least as high as the proposer.
for row in t_monitor(run.trace)[:8]:
    print(f"round {row.round}: proposer p{row.proposer} correct={row.proposer_correct} "
          f"count={row.count} post_gst={row.post_gst} satisfying={row.satisfying}")
