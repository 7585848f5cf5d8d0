"""Deterministic simulation of Tendermint one-shot and repeated consensus.

The package is organised bottom-up: ``types`` (blocks, messages, quorum
predicates), ``oneshot`` (the per-height state machine), ``netsim`` (the
discrete-event network), ``repeated`` (chains of heights), ``fairness``
(reward mechanisms and audits), ``adversary`` (Byzantine behaviour and the
assumption-T monitor), ``properties`` (trace checkers) and ``harness``.
"""
from .adversary import (
    ScriptedByzantine, ScriptedNetwork, SlowCommitPolicy, StrategyByzantine, UnlockBait,
    assumption_t_holds, load_scenario, random_byzantine, scenario_agreement_violation,
    scenario_fairness_violation, scenario_livelock, scenario_names, t_monitor,
)
from .config import ConfigError, RunConfig, from_dict, load
from .fairness import (
    Mechanism, Variant, audit_fairness, delayed_reward, f1_commit_filter,
    modulable_timeout_update, timeout_trajectory,
)
from .harness import analyse, build, check_trace, fuzz, run_config, simulate
from .netsim import Mode, ModelViolation, NetworkModel, Simulator, Trace
from .oneshot import OneShot, Step, Timeouts, proposer
from .properties import Verdict, check_all
from .repeated import RepeatedNode, stake_rotation_selector, static_selector
from .types import (
    BOTTOM, GENESIS, NIL, Block, ConsensusMessage, Kind, Mempool, VoteSet,
    at_least_one_third, create_new_block, is_23_maj, is_valid, max_faulty, one_third_plus,
    quorum,
)

__version__ = "0.1.0"

__all__ = [
    "BOTTOM",
    "Block",
    "ConfigError",
    "ConsensusMessage",
    "GENESIS",
    "Kind",
    "Mechanism",
    "Mempool",
    "Mode",
    "ModelViolation",
    "NIL",
    "NetworkModel",
    "OneShot",
    "RepeatedNode",
    "RunConfig",
    "ScriptedByzantine",
    "ScriptedNetwork",
    "Simulator",
    "SlowCommitPolicy",
    "Step",
    "StrategyByzantine",
    "Timeouts",
    "Trace",
    "UnlockBait",
    "Variant",
    "Verdict",
    "VoteSet",
    "analyse",
    "assumption_t_holds",
    "at_least_one_third",
    "audit_fairness",
    "build",
    "check_all",
    "check_trace",
    "create_new_block",
    "delayed_reward",
    "f1_commit_filter",
    "from_dict",
    "fuzz",
    "is_23_maj",
    "is_valid",
    "load",
    "load_scenario",
    "max_faulty",
    "modulable_timeout_update",
    "one_third_plus",
    "proposer",
    "quorum",
    "random_byzantine",
    "run_config",
    "scenario_agreement_violation",
    "scenario_fairness_violation",
    "scenario_livelock",
    "scenario_names",
    "simulate",
    "stake_rotation_selector",
    "static_selector",
    "t_monitor",
    "timeout_trajectory",
]
