from .base import ConcurrentDictionary, DictConfig, guard_access
from .bst import BstDictionary, INF1, INF2
from .abtree import AbTreeDictionary

__all__ = [
    "AbTreeDictionary",
    "BstDictionary",
    "ConcurrentDictionary",
    "DictConfig",
    "INF1",
    "INF2",
    "guard_access",
    "make_dictionary",
]


def make_dictionary(tree: str, config: DictConfig | None = None) -> ConcurrentDictionary:
    if tree == "bst":
        return BstDictionary(config)
    if tree == "abtree":
        return AbTreeDictionary(config)
    raise ValueError(f"unknown tree kind {tree!r}")
