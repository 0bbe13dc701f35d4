"""Concurrent ordered dictionaries over an emulated best-effort
transaction engine, with selectable execution-path policies."""

from .engine import (
    AbortReason,
    EmulatedEngine,
    TxnConfig,
    TxnOutcome,
    FAILED_VALIDATION,
    GATE_CLOSED,
    NODE_MARKED,
)
from .policy import PathBudget, PolicyKind
from .trees import AbTreeDictionary, BstDictionary, DictConfig, make_dictionary

__all__ = [
    "AbTreeDictionary",
    "AbortReason",
    "BstDictionary",
    "DictConfig",
    "EmulatedEngine",
    "FAILED_VALIDATION",
    "GATE_CLOSED",
    "NODE_MARKED",
    "PathBudget",
    "PolicyKind",
    "TxnConfig",
    "TxnOutcome",
    "make_dictionary",
]
