"""Familiarity-experiment metrics: surprise, preference and asymmetry.

Surprise is the percentage of test points falling outside a familiar-class
tree's world box: the model "believes" those points are something other than
everything it has seen. Running the protocol in both directions gives the
asymmetry of category membership between two classes; a joint-cluster control
(both classes built together, order-free) shows whether the asymmetry comes
from the one-class-at-a-time setup.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import EmptyInputError, UndefinedPreferenceError
from .tree import Activation, BuildConfig, ClusterStatus, ClusterTree, build

__all__ = ["SurpriseReport", "AsymmetryReport", "DirectionReport",
           "JointControlReport", "ProtocolReport", "ClassSplit",
           "surprise", "preference", "asymmetry", "run_familiarity_protocol"]


@dataclass(frozen=True)
class SurpriseReport:
    familiar_label: str
    novel_label: str
    n_test: int
    n_outside: int

    @property
    def surprise(self) -> float:
        """Percent of test points outside the familiar world box."""
        return 100.0 * self.n_outside / self.n_test


@dataclass(frozen=True)
class AsymmetryReport:
    """Signed difference of two directional percentages; positive values point
    toward the first class."""

    first_label: str
    second_label: str
    preference_first: float
    preference_second: float
    stimulus: str = "novel"   # which test stimuli the two percentages describe

    @property
    def asymmetry(self) -> float:
        return self.preference_first - self.preference_second


def _majority_label(activations) -> str:
    counts = {}
    for a in activations:
        for label in a.labels:
            counts[label] = counts.get(label, 0) + 1
    return max(sorted(counts), key=lambda l: counts[l]) if counts else ""


def surprise(tree_of_familiar: ClusterTree, test: Sequence[Activation]) -> SurpriseReport:
    """Count test points outside the familiar tree's world cluster.

    The tree is expected to have been built from a single class; "outside"
    means outside the root box, the envelope of that class's world.
    """
    test = list(test)
    if not test:
        raise EmptyInputError("surprise needs at least one test point")
    root_box = tree_of_familiar.root.box
    n_outside = sum(1 for a in test if not root_box.contains(a.features))
    familiar = ",".join(sorted(tree_of_familiar.root.common_labels)) or \
        _majority_label(tree_of_familiar.root.members)
    return SurpriseReport(
        familiar_label=familiar,
        novel_label=_majority_label(test),
        n_test=len(test),
        n_outside=n_outside,
    )


def preference(t_novel: float, t_familiar: float) -> float:
    """100 x novel / (novel + familiar), the share of attention the novel
    stimulus would receive."""
    if t_novel < 0 or t_familiar < 0:
        raise ValueError("looking measures must be non-negative")
    total = t_novel + t_familiar
    if total == 0:
        raise UndefinedPreferenceError("both looking measures are zero")
    return 100.0 * t_novel / total


def asymmetry(pref_first: float, pref_second: float) -> float:
    """Signed difference in percent; positive points toward the first class."""
    for p in (pref_first, pref_second):
        if not 0.0 <= p <= 100.0:
            raise ValueError(f"preference {p} outside [0, 100]")
    return pref_first - pref_second


@dataclass(frozen=True)
class ClassSplit:
    label: str
    train: tuple
    test: tuple

    @classmethod
    def make(cls, label, train, test) -> "ClassSplit":
        return cls(str(label), tuple(train), tuple(test))


@dataclass(frozen=True)
class DirectionReport:
    """One familiarisation direction: build on the familiar class, test with
    fresh familiar stimuli and with stimuli of the other class."""

    familiar_label: str
    surprise_familiar: SurpriseReport
    surprise_novel: SurpriseReport


@dataclass(frozen=True)
class JointControlReport:
    """Order-free control: both classes clustered together. Inaccuracy is the
    percent of a class's training points not sitting in a pure leaf carrying
    that class's label."""

    first_label: str
    second_label: str
    inaccuracy_first: float
    inaccuracy_second: float

    @property
    def asymmetry(self) -> float:
        return self.inaccuracy_first - self.inaccuracy_second


@dataclass(frozen=True)
class ProtocolReport:
    direction_first: DirectionReport
    direction_second: DirectionReport
    asymmetry_novel: AsymmetryReport
    asymmetry_familiar: AsymmetryReport
    joint: Optional[JointControlReport] = None


def _pure_assignment_inaccuracy(tree: ClusterTree, label: str) -> float:
    """Percent of the labelled training points whose leaf is not pure for
    that label."""
    total = 0
    impure = 0
    for leaf in tree.leaves():
        ok = leaf.status is ClusterStatus.PURE and label in leaf.common_labels
        for a in leaf.members:
            if label in a.labels:
                total += 1
                if not ok:
                    impure += 1
    return 100.0 * impure / total if total else 0.0


def run_familiarity_protocol(first: ClassSplit, second: ClassSplit,
                             cfg: Optional[BuildConfig] = None,
                             joint_control: bool = False,
                             threads: int = 1) -> ProtocolReport:
    """Run both familiarisation directions and derive the asymmetries.

    Asymmetry on novel stimuli compares the two cross-class surprises
    (first-class stimuli shown to the second-class world, minus the reverse);
    asymmetry on familiar stimuli compares the two within-class surprises.
    Positive values point toward the first class. ``joint_control`` adds the
    order-free both-classes-at-once control.
    """
    cfg = cfg or BuildConfig()

    def direction(familiar: ClassSplit, other: ClassSplit) -> DirectionReport:
        tree = build(list(familiar.train), cfg)
        return DirectionReport(
            familiar_label=familiar.label,
            surprise_familiar=surprise(tree, familiar.test),
            surprise_novel=surprise(tree, other.test),
        )

    if threads >= 2:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fut_first = pool.submit(direction, first, second)
            fut_second = pool.submit(direction, second, first)
            dir_first, dir_second = fut_first.result(), fut_second.result()
    else:
        dir_first = direction(first, second)
        dir_second = direction(second, first)

    # stimulus = first class: it appears as the novel test in the direction
    # familiarised on the second class, and vice versa.
    asym_novel = AsymmetryReport(
        first_label=first.label, second_label=second.label,
        preference_first=dir_second.surprise_novel.surprise,
        preference_second=dir_first.surprise_novel.surprise,
        stimulus="novel",
    )
    asym_familiar = AsymmetryReport(
        first_label=first.label, second_label=second.label,
        preference_first=dir_first.surprise_familiar.surprise,
        preference_second=dir_second.surprise_familiar.surprise,
        stimulus="familiar",
    )

    joint = None
    if joint_control:
        joint_tree = build(list(first.train) + list(second.train), cfg)
        joint = JointControlReport(
            first_label=first.label, second_label=second.label,
            inaccuracy_first=_pure_assignment_inaccuracy(joint_tree, first.label),
            inaccuracy_second=_pure_assignment_inaccuracy(joint_tree, second.label),
        )
    return ProtocolReport(
        direction_first=dir_first,
        direction_second=dir_second,
        asymmetry_novel=asym_novel,
        asymmetry_familiar=asym_familiar,
        joint=joint,
    )
