"""Quota-aware seeded sampling for taxonomic balance.

Each top-level category gets an exact quota, split evenly across its
leaves (remainders go to earlier leaves in canonical order). Sampling is
without replacement and deterministic under the seed.
"""

from __future__ import annotations

import random
from typing import Sequence, TypeVar

from ..documents import CATEGORY_LEAVES, TaxonomyPath

__all__ = ["InsufficientSupplyError", "leaf_quotas", "quota_sample"]

ItemT = TypeVar("ItemT")


class InsufficientSupplyError(ValueError):
    def __init__(self, leaf: TaxonomyPath, need: int, have: int):
        super().__init__(f"leaf {leaf} has {have} items, quota needs {need} (short {need - have})")
        self.leaf = leaf
        self.need = need
        self.have = have


def leaf_quotas(quotas: dict[str, int]) -> dict[TaxonomyPath, int]:
    """Even per-leaf split of each category quota."""
    out: dict[TaxonomyPath, int] = {}
    for category, quota in quotas.items():
        leaves = CATEGORY_LEAVES.get(category)
        if leaves is None:
            raise ValueError(f"unknown taxonomy category {category!r}")
        if quota < 0:
            raise ValueError(f"negative quota for {category!r}")
        base, rem = divmod(quota, len(leaves))
        for i, leaf in enumerate(leaves):
            out[TaxonomyPath(category, leaf)] = base + (1 if i < rem else 0)
    return out


def quota_sample(items: Sequence[ItemT], quotas: dict[str, int], seed: int) -> list[ItemT]:
    """Seeded, deterministic, without-replacement sample meeting every
    leaf quota exactly. Items must expose ``.taxonomy`` and ``.id``.

    Raises :class:`InsufficientSupplyError` naming the first leaf (in
    canonical order) whose supply cannot cover its quota.
    """
    per_leaf = leaf_quotas(quotas)
    by_leaf: dict[TaxonomyPath, list[ItemT]] = {leaf: [] for leaf in per_leaf}
    for item in items:
        taxonomy = getattr(item, "taxonomy", None)
        if taxonomy in by_leaf:
            by_leaf[taxonomy].append(item)

    sampled: list[ItemT] = []
    for leaf, quota in per_leaf.items():
        supply = sorted(by_leaf[leaf], key=lambda item: item.id)
        if len(supply) < quota:
            raise InsufficientSupplyError(leaf, quota, len(supply))
        rng = random.Random(f"quota:{seed}:{leaf}")
        sampled.extend(rng.sample(supply, quota))
    return sampled
