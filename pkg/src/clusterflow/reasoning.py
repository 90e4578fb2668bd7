"""Relational reasoning over small labelled batches.

Three-item batches are classified as one of:

* ``set``      all items share at least one label;
* ``ssd``      same-same-different: not all share, but some pair does; the
               odd one out is the item least like the others;
* ``antiset``  no pair shares any label.

The verdict kind is decided by label-set algebra; a micro cluster build over
the items is executed alongside and its structure (world-cluster purity,
reject count) is reported on the verdict, so tests can hold the two accounts
to each other.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from itertools import combinations
from typing import Optional

from .errors import ArityError
from .seeding import SeedConfig
from .tree import Activation, BuildConfig, ClusterStatus, build

__all__ = ["VerdictKind", "TripleVerdict", "GroupVerdict",
           "classify_triple", "shared_labels", "generalize_n"]


class VerdictKind(str, Enum):
    SET = "set"
    SSD = "ssd"
    ANTISET = "antiset"


@dataclass(frozen=True)
class TripleVerdict:
    kind: VerdictKind
    odd_one_out: tuple            # item indices; several when tied, empty for set/antiset
    rejects: int
    c0_status: ClusterStatus
    shared: dict                  # (i, j) -> frozenset of shared labels

    def odd_source_ids(self, items) -> tuple:
        return tuple(items[i].source_id for i in self.odd_one_out)


@dataclass(frozen=True)
class GroupVerdict:
    kind: VerdictKind
    largest_pure_subgroup: tuple  # item indices sharing a label
    rejects: int
    shared: dict


def shared_labels(a: Activation, b: Activation) -> frozenset:
    """Labels the two activations have in common."""
    return frozenset(a.labels & b.labels)


def _pairwise(items) -> dict:
    return {
        (i, j): shared_labels(items[i], items[j])
        for i, j in combinations(range(len(items)), 2)
    }


def _algebraic_kind(items, shared) -> VerdictKind:
    common = frozenset.intersection(*(frozenset(a.labels) for a in items))
    if common:
        return VerdictKind.SET
    if all(not s for s in shared.values()):
        return VerdictKind.ANTISET
    return VerdictKind.SSD


def _odd_one_out(n: int, shared: dict) -> tuple:
    """Items with the smallest summed pairwise label overlap; ties reported."""
    scores = [0] * n
    for (i, j), labels in shared.items():
        scores[i] += len(labels)
        scores[j] += len(labels)
    low = min(scores)
    return tuple(i for i, s in enumerate(scores) if s == low)


def micro_build_config(batch_size: int) -> BuildConfig:
    """Tree configuration for reasoning batches: one batch holds everything."""
    return BuildConfig(
        batch_size=max(batch_size, 1),
        seed_config=SeedConfig(algorithm="detk", k_max=2),
    )


def classify_triple(items, cfg: Optional[BuildConfig] = None) -> TripleVerdict:
    """Classify a three-item batch as set / ssd / antiset.

    Items may carry several labels; matching is on any shared label. The
    micro cluster build runs with one batch covering all items.
    """
    items = list(items)
    if len(items) != 3:
        raise ArityError(f"classify_triple needs exactly 3 items, got {len(items)}")
    cfg = cfg or micro_build_config(len(items))
    if cfg.batch_size < len(items):
        cfg = replace(cfg, batch_size=len(items))
    tree = build(items, cfg)
    shared = _pairwise(items)
    kind = _algebraic_kind(items, shared)
    odd = _odd_one_out(3, shared) if kind is VerdictKind.SSD else ()
    return TripleVerdict(
        kind=kind,
        odd_one_out=odd,
        rejects=len(tree.rejects),
        c0_status=tree.root.status,
        shared=shared,
    )


def generalize_n(items) -> GroupVerdict:
    """Extend the three-item verdicts to n >= 2 items by label-set algebra.

    Set when all items share a label; antiset when no pair shares any;
    otherwise a partition report naming the largest subgroup with a common
    label, everything else counted as rejects.
    """
    items = list(items)
    if len(items) < 2:
        raise ArityError(f"need at least 2 items, got {len(items)}")
    shared = _pairwise(items)
    kind = _algebraic_kind(items, shared)
    if kind is VerdictKind.SET:
        largest = tuple(range(len(items)))
    elif kind is VerdictKind.ANTISET:
        largest = ()
    else:
        carriers: dict = {}
        for i, a in enumerate(items):
            for label in a.labels:
                carriers.setdefault(label, []).append(i)
        best_label = max(sorted(carriers), key=lambda l: len(carriers[l]))
        largest = tuple(carriers[best_label])
    rejects = len(items) - len(largest)
    return GroupVerdict(kind=kind, largest_pure_subgroup=largest,
                        rejects=rejects, shared=shared)
