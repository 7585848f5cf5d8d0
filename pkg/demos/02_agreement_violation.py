"""
When an old unlock rule lets two validators decide differently
==============================================================

With the legacy unlock rule, a validator locked on a block unlocks as soon
as it sees a later quorum for any block, including the one it is locked on.
The bundled ``agreement_violation`` schedule turns that into two different
decisions at the same height.  The corrected rule survives the identical
schedule.
"""
from tendersim import load_scenario, run_config
from tendersim.harness import render
from tendersim.properties import round_table

legacy = run_config(load_scenario("agreement_violation"))
print(render(legacy.report))

# %%
# Round by round: (locked block, last locked round[, decision]) per correct
# validator.  Validator 1 decides in round 1 and leaves; validators 2 and 3
# are walked into unlocking until validator 2 decides a fresh block.
for r, rows in sorted(round_table(legacy.trace).items()):
    print(f"round {r}:", {p: row[:2] + row[3:] for p, row in sorted(rows.items())})

# %%
# Same script, corrected rule.
corrected = run_config(load_scenario("agreement_violation", unlock_rule="corrected"))
print("corrected rule ->", corrected.report["status"]["Agreement"])
