"""
Driving one validator by hand
=============================

The one-shot state machine is a pure event handler: feed it a message or a
timer expiry and it hands back effects (broadcasts, timers, lock changes,
decisions).  Nothing here needs a network.
"""
from tendersim import GENESIS, ConsensusMessage, Kind, Mempool, OneShot, Timeouts
from tendersim import create_new_block, is_valid, quorum

V = (1, 2, 3, 4)
print(f"n={len(V)}: a quorum is {quorum(len(V))} distinct signers")

# %%
# Validator 2 at height 1.  Round 1 belongs to validator 1, so validator 2
# starts in the propose step with its propose timer armed.
node = OneShot(2, 1, V,
               make_block=lambda r: create_new_block((), Mempool(), GENESIS, 2, nonce=r),
               is_valid=lambda b: is_valid(b, GENESIS),
               timeouts=Timeouts(propose=5, prevote=5, precommit=5))
for effect in node.start():
    print("start ->", effect)

# %%
# The proposal arrives: validator 2 prevotes it and relays it once.
B = create_new_block((), Mempool(), GENESIS, 1)
for effect in node.on_message(ConsensusMessage(Kind.PROPOSE, 1, 1, 1, B)):
    print("propose ->", type(effect).__name__)

# %%
# Prevotes from 1 and 3 complete a quorum for B: validator 2 locks and precommits.
for signer in (1, 3):
    out = node.on_message(ConsensusMessage(Kind.PREVOTE, signer, 1, 1, B))
print("after prevotes:", node.snapshot()["locked"] is B, "llr =", node.snapshot()["llr"])

# %%
# Two more precommits and it decides.
for signer in (1, 3):
    out = node.on_message(ConsensusMessage(Kind.PRECOMMIT, signer, 1, 1, B))
print("decided:", node.decided == B, "| step:", node.step.value)
