"""Transverse-connection design space of the five-module foot.

Every link and joint of a module can be tied to its analog in the adjacent
modules in one of three ways (free, elastic, rigid). The raw space is
3**11 assignments; a fixed list of rules prunes it down to the handful of
designs worth building, and one equivalence merges duplicates.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np


class ComponentKind(enum.Enum):
    TOE1 = "Toe1"
    TOE2 = "Toe2"
    TOE3 = "Toe3"
    FRONTAL_ARCH = "FrontalArch"
    REAR_ARCH = "RearArch"
    HEEL = "Heel"
    IP1 = "IP1"
    IP2 = "IP2"
    MTP = "MTP"
    MIDTARSAL_ANKLE = "MidtarsalAnkle"
    HEEL_JOINT = "HeelJoint"

    @property
    def is_link(self) -> bool:
        return self in LINKS

    @property
    def is_joint(self) -> bool:
        return self in JOINTS


COMPONENTS: tuple[ComponentKind, ...] = tuple(ComponentKind)
LINKS = frozenset({ComponentKind.TOE1, ComponentKind.TOE2, ComponentKind.TOE3,
                   ComponentKind.FRONTAL_ARCH, ComponentKind.REAR_ARCH, ComponentKind.HEEL})
JOINTS = frozenset(COMPONENTS) - LINKS


class ConnectionType(enum.Enum):
    FREE = "F"
    ELASTIC = "K"
    RIGID = "R"

    @classmethod
    def from_letter(cls, letter: str) -> "ConnectionType":
        return cls(letter.upper())


F, K, R = ConnectionType.FREE, ConnectionType.ELASTIC, ConnectionType.RIGID
CONNECTION_TYPES: tuple[ConnectionType, ...] = (F, K, R)

# components that make up the three-letter design label, in label order
LABEL_SITES = (ComponentKind.FRONTAL_ARCH, ComponentKind.REAR_ARCH, ComponentKind.HEEL)


@dataclass(frozen=True)
class ConnectionAssignment:
    """Total map component -> connection type, stored in ``COMPONENTS`` order."""

    types: tuple[ConnectionType, ...]

    def __post_init__(self):
        if len(self.types) != len(COMPONENTS):
            raise ValueError(f"assignment must cover all {len(COMPONENTS)} components")
        if not all(isinstance(t, ConnectionType) for t in self.types):
            raise TypeError("assignment entries must be ConnectionType")

    @classmethod
    def from_mapping(cls, mapping: Mapping[ComponentKind, ConnectionType]) -> "ConnectionAssignment":
        missing = [c.value for c in COMPONENTS if c not in mapping]
        if missing:
            raise ValueError(f"assignment is not total, missing {missing}")
        return cls(tuple(mapping[c] for c in COMPONENTS))

    @classmethod
    def uniform(cls, t: ConnectionType) -> "ConnectionAssignment":
        return cls((t,) * len(COMPONENTS))

    def __getitem__(self, kind: ComponentKind) -> ConnectionType:
        return self.types[COMPONENTS.index(kind)]

    def replace(self, **changes: ConnectionType) -> "ConnectionAssignment":
        """Copy with some entries changed, keyed by ``ComponentKind`` member name."""
        types = list(self.types)
        for name, t in changes.items():
            types[COMPONENTS.index(ComponentKind[name])] = t
        return ConnectionAssignment(tuple(types))

    def as_dict(self) -> dict[str, str]:
        return {c.value: t.value for c, t in zip(COMPONENTS, self.types)}

    @classmethod
    def from_dict(cls, d: Mapping[str, str]) -> "ConnectionAssignment":
        return cls.from_mapping({ComponentKind(k): ConnectionType.from_letter(v) for k, v in d.items()})

    @property
    def label(self) -> str:
        return label(self)


def label(a: ConnectionAssignment) -> str:
    return "".join(a[site].value for site in LABEL_SITES)


class RuleId(enum.Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"
    C4 = "C4"
    C5 = "C5"
    C6 = "C6"
    C7 = "C7"
    C7_1 = "C7_1"
    C7_2 = "C7_2"
    C7_3 = "C7_3"
    C7_4 = "C7_4"
    C7_5 = "C7_5"
    C7_6 = "C7_6"


class Outcome(enum.Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"
    REWRITE = "Rewrite"


@dataclass(frozen=True)
class RuleVerdict:
    rule_id: RuleId
    outcome: Outcome
    rewritten_to: ConnectionAssignment | None = None
    note: str = ""

    def __post_init__(self):
        if self.outcome is Outcome.REWRITE and self.rewritten_to is None:
            raise ValueError("Rewrite verdict needs a target assignment")
        if self.outcome is Outcome.REJECT and self.rewritten_to is not None:
            raise ValueError("Reject verdict cannot carry a target assignment")

    def as_dict(self) -> dict:
        d = {"rule": self.rule_id.value, "outcome": self.outcome.value, "note": self.note}
        if self.rewritten_to is not None:
            d["rewritten_to"] = label(self.rewritten_to)
        return d


@dataclass(frozen=True)
class _Rule:
    rule_id: RuleId
    note: str
    # restricted components and their allowed types; empty = holds by construction
    allowed: Mapping[ComponentKind, frozenset] = field(default_factory=dict)


_ANY = frozenset(CONNECTION_TYPES)

# Fixed evaluation order. Rules with no ``allowed`` entries are structural and
# hold for every assignment of this (one type per component) space.
RULES: tuple[_Rule, ...] = (
    _Rule(RuleId.A1, "load path through the central rear arch, rigid attachment"),
    _Rule(RuleId.A2, "each component couples only to its analog in adjacent modules"),
    _Rule(RuleId.A3, "all four adjacent pairs coupled the same way"),
    _Rule(RuleId.A4, "modules move relative to each other in the sagittal plane only"),
    _Rule(RuleId.C1, "translations share one type (one type per component)"),
    _Rule(RuleId.C2, "IP joints kinematically independent, left free",
          {ComponentKind.IP1: frozenset({F}), ComponentKind.IP2: frozenset({F})}),
    _Rule(RuleId.C3, "toes too small to couple, free",
          {ComponentKind.TOE1: frozenset({F}), ComponentKind.TOE2: frozenset({F}),
           ComponentKind.TOE3: frozenset({F})}),
    _Rule(RuleId.C4, "frontal arches elastic only", {ComponentKind.FRONTAL_ARCH: frozenset({K})}),
    _Rule(RuleId.C5, "rear arches carry the user load, not free",
          {ComponentKind.REAR_ARCH: frozenset({K, R})}),
    _Rule(RuleId.C6, "heel uses one type for translations and rotation"),
    _Rule(RuleId.C7, "midtarsal-ankle joint rigid", {ComponentKind.MIDTARSAL_ANKLE: frozenset({R})}),
    _Rule(RuleId.C7_1, "arches keep one rotation about the common ankle axis"),
    _Rule(RuleId.C7_2, "elastic MTP equivalent to elastic frontal arch, MTP left free",
          {ComponentKind.MTP: frozenset({F})}),
    _Rule(RuleId.C7_3, "elastic heel joint equivalent to elastic rear arch",
          {ComponentKind.HEEL_JOINT: frozenset({F, R})}),
    _Rule(RuleId.C7_4, "rigid heel joint equivalent to rigid rear arch",
          {ComponentKind.HEEL_JOINT: frozenset({F, K})}),
    _Rule(RuleId.C7_5, "with rigid rear arches the heel keeps one rotation"),
    _Rule(RuleId.C7_6, "rigid heels make the rear-arch connection indifferent"),
)

# Feasible types per component once every rule is applied (the table of
# surviving options). Used by the vectorized filter.
FEASIBLE: dict[ComponentKind, frozenset] = {c: _ANY for c in COMPONENTS}
for _r in RULES:
    for _c, _ok in _r.allowed.items():
        FEASIBLE[_c] = FEASIBLE[_c] & _ok


def _canonical(a: ConnectionAssignment) -> ConnectionAssignment:
    if a[ComponentKind.HEEL] is R and a[ComponentKind.REAR_ARCH] is K:
        return a.replace(REAR_ARCH=R)
    return a


def apply_constraints(a: ConnectionAssignment) -> tuple[bool, list[RuleVerdict]]:
    """Evaluate every rule in order; accepted iff no rule rejects."""
    trace = []
    accepted = True
    for rule in RULES:
        bad = [c for c, ok in rule.allowed.items() if a[c] not in ok]
        if bad:
            accepted = False
            what = ", ".join(f"{c.value}={a[c].value}" for c in bad)
            trace.append(RuleVerdict(rule.rule_id, Outcome.REJECT, note=f"{rule.note}; got {what}"))
        elif rule.rule_id is RuleId.C7_6 and _canonical(a) != a:
            trace.append(RuleVerdict(rule.rule_id, Outcome.REWRITE, _canonical(a),
                                     note=f"{rule.note}; {label(a)} -> {label(_canonical(a))}"))
        else:
            trace.append(RuleVerdict(rule.rule_id, Outcome.ACCEPT, note=rule.note))
    return accepted, trace


def violated_rules(a: ConnectionAssignment) -> set[RuleId]:
    """Rules whose predicate ``a`` breaks (independent re-check of a trace)."""
    return {r.rule_id for r in RULES if any(a[c] not in ok for c, ok in r.allowed.items())}


def enumerate_raw_space() -> Iterator[ConnectionAssignment]:
    for combo in itertools.product(CONNECTION_TYPES, repeat=len(COMPONENTS)):
        yield ConnectionAssignment(combo)


def raw_space_codes() -> np.ndarray:
    """All 3**11 assignments as an (N, 11) int8 array, same order as the stream."""
    n = len(COMPONENTS)
    grids = np.indices((3,) * n, dtype=np.int8)
    return grids.reshape(n, -1).T


def feasible_mask(codes: np.ndarray) -> np.ndarray:
    mask = np.ones(len(codes), dtype=bool)
    for j, c in enumerate(COMPONENTS):
        ok = [CONNECTION_TYPES.index(t) for t in FEASIBLE[c]]
        mask &= np.isin(codes[:, j], ok)
    return mask


def accepted_assignments() -> list[ConnectionAssignment]:
    """Filter the whole raw space (vectorized) and return the accepted designs."""
    codes = raw_space_codes()
    keep = codes[feasible_mask(codes)]
    return [ConnectionAssignment(tuple(CONNECTION_TYPES[i] for i in row)) for row in keep]


def reduce_equivalences(accepted: Iterable[ConnectionAssignment]) -> set[ConnectionAssignment]:
    return {_canonical(a) for a in accepted}


def final_designs() -> list[str]:
    """Labels of the canonical designs, sorted."""
    return sorted(label(a) for a in reduce_equivalences(accepted_assignments()))


def design_records(include_rejected: bool = False) -> list[dict]:
    """JSON-ready records ``{label, assignment, accepted, canonical, trace}``."""
    records = []
    source = enumerate_raw_space() if include_rejected else iter(accepted_assignments())
    for a in source:
        ok, trace = apply_constraints(a)
        if not ok and not include_rejected:
            continue
        records.append({
            "label": label(a),
            "assignment": a.as_dict(),
            "accepted": ok,
            "canonical": label(_canonical(a)) if ok else None,
            "trace": [v.as_dict() for v in trace],
        })
    return records
