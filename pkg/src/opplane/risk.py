"""Operation risk model: typed operation instances, policy tables, decisions.

An operation instance names who does what to which object in which context
with which effect. The model projects an instance onto a four-component risk
vector (action, object, context, effect severities, each 0..3), aggregates
the vector into one of four security levels L0..L3, and maps the level to an
enforcement decision:

    d_ree   run on the ordinary path, no grant verification
    d_ia    run under a verified single-use grant
    d_ie    run under a grant after an extra plane-side dispatch record
    d_uc    held for explicit human confirmation
    d_deny  refused before any execution

All tables live in a PolicyConfig loaded from a single JSON document and are
validated on load. Every function here is pure and deterministic: no clocks,
no I/O, no randomness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum, IntEnum
from fnmatch import fnmatchcase
from pathlib import Path


class Action(str, Enum):
    READ = "read"
    WRITE = "write"
    COPY = "copy"
    RENAME = "rename"
    EXECUTE = "execute"
    SEND = "send"
    INVOKE = "invoke"
    MODIFY = "modify"
    CONFIGURE = "configure"


# Actions that change object state; remote instances of these are gated by
# the remote-write allowlist.
WRITE_CLASS = frozenset(
    {Action.WRITE, Action.COPY, Action.RENAME, Action.MODIFY, Action.CONFIGURE}
)

COMMAND_CLASS = frozenset({Action.EXECUTE, Action.INVOKE})


class ObjectClass(str, Enum):
    PUBLIC = "public"
    ORDINARY = "ordinary"
    SENSITIVE = "sensitive"
    CRITICAL = "critical"


class Origin(str, Enum):
    LOCAL = "local"
    REMOTE = "remote"
    BROWSER = "browser"
    PLUGIN = "plugin"


class EffectClass(str, Enum):
    NONE = "none"
    ORDINARY_MODIFICATION = "ordinary-modification"
    SENSITIVE_DISCLOSURE = "sensitive-disclosure"
    INTEGRITY_OR_PRIVILEGE = "integrity-or-privilege"
    EXTERNALIZATION = "externalization"


class SecurityLevel(IntEnum):
    L0 = 0
    L1 = 1
    L2 = 2
    L3 = 3

    @property
    def label(self) -> str:
        return f"L{int(self)}"

    @classmethod
    def from_label(cls, label: str) -> "SecurityLevel":
        if not isinstance(label, str) or not label.startswith("L"):
            raise ValueError(f"bad security level label: {label!r}")
        return cls(int(label[1:]))


class Decision(str, Enum):
    REE = "d_ree"
    IA = "d_ia"
    IE = "d_ie"
    UC = "d_uc"
    DENY = "d_deny"


# Severity order used when one headline decision summarizes several
# operations: later entries dominate earlier ones.
DECISION_SEVERITY = [Decision.REE, Decision.IA, Decision.IE, Decision.UC, Decision.DENY]


@dataclass(frozen=True)
class Context:
    """Execution context flags carried with each operation instance."""

    origin: Origin = Origin.LOCAL
    task_consistent: bool = True
    user_present: bool = True
    cross_boundary: bool = False
    chained: bool = False

    def to_wire(self) -> dict:
        return {
            "origin": self.origin.value,
            "task_consistent": self.task_consistent,
            "user_present": self.user_present,
            "cross_boundary": self.cross_boundary,
            "chained": self.chained,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "Context":
        if not isinstance(data, dict):
            raise ValueError("context must be an object")
        unknown = set(data) - {
            "origin",
            "task_consistent",
            "user_present",
            "cross_boundary",
            "chained",
        }
        if unknown:
            raise ValueError(f"unknown context fields: {sorted(unknown)}")
        ctx = cls(
            origin=Origin(data.get("origin", "local")),
            task_consistent=bool(data.get("task_consistent", True)),
            user_present=bool(data.get("user_present", True)),
            cross_boundary=bool(data.get("cross_boundary", False)),
            chained=bool(data.get("chained", False)),
        )
        for flag in ("task_consistent", "user_present", "cross_boundary", "chained"):
            if flag in data and not isinstance(data[flag], bool):
                raise ValueError(f"context flag {flag} must be boolean")
        return ctx


@dataclass(frozen=True)
class ObjectRef:
    """Target object: a path-like descriptor plus its resolved class tag.

    The descriptor is a logical path (``/etc/ssh/sshd_config``, ``~/.ssh/id_rsa``,
    ``/workspace/django/tox.ini``), an endpoint-relative path for remote
    operations, or the full command line for command execution.
    """

    path: str
    object_class: ObjectClass

    def to_wire(self) -> dict:
        return {"path": self.path, "object_class": self.object_class.value}

    @classmethod
    def resolve(cls, path: str, policy: "PolicyConfig") -> "ObjectRef":
        object_class, _ = classify_object(path, policy)
        return cls(path=path, object_class=object_class)


@dataclass(frozen=True)
class OperationInstance:
    subject: str
    action: Action
    object: ObjectRef
    context: Context
    effect: EffectClass

    def __post_init__(self):
        if not self.subject:
            raise ValueError("operation subject must be non-empty")


@dataclass(frozen=True)
class RiskVector:
    """Per-dimension severities, each in 0..3."""

    action_level: int
    object_level: int
    context_level: int
    effect_level: int

    def __post_init__(self):
        for name, value in self.as_tuple_named():
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"{name} must be an integer")
            if not 0 <= value <= 3:
                raise ValueError(f"{name} out of range: {value}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (
            self.action_level,
            self.object_level,
            self.context_level,
            self.effect_level,
        )

    def as_tuple_named(self):
        return (
            ("action_level", self.action_level),
            ("object_level", self.object_level),
            ("context_level", self.context_level),
            ("effect_level", self.effect_level),
        )

    def score(self) -> int:
        return sum(self.as_tuple())

    def dominates(self, other: "RiskVector") -> bool:
        """Componentwise >= comparison."""
        return all(a >= b for a, b in zip(self.as_tuple(), other.as_tuple()))


class PolicyError(ValueError):
    """Policy document failed validation; message carries the field path."""


@dataclass(frozen=True)
class ObjectRule:
    pattern: str
    object_class: ObjectClass
    level: int


@dataclass(frozen=True)
class ContextRule:
    # All present conditions must hold. origin may list several origins.
    level: int
    origins: tuple[str, ...] = ()
    task_consistent: bool | None = None
    user_present: bool | None = None
    cross_boundary: bool | None = None
    chained: bool | None = None

    def matches(self, ctx: Context) -> bool:
        if self.origins and ctx.origin.value not in self.origins:
            return False
        for name in ("task_consistent", "user_present", "cross_boundary", "chained"):
            want = getattr(self, name)
            if want is not None and getattr(ctx, name) is not want:
                return False
        return True


@dataclass(frozen=True)
class EffectRule:
    effect: EffectClass
    actions: tuple[str, ...] = ()
    object_classes: tuple[str, ...] = ()

    def matches(self, action: Action, object_class: ObjectClass) -> bool:
        if self.actions and action.value not in self.actions:
            return False
        if self.object_classes and object_class.value not in self.object_classes:
            return False
        return True


@dataclass(frozen=True)
class OverrideRule:
    """Monotone aggregation override: all floor conditions met -> at least level.

    Conditions are lower bounds only, so raising any vector component can
    never deactivate an override. That keeps classification monotone by
    construction.
    """

    level: int
    action_min: int = 0
    object_min: int = 0
    context_min: int = 0
    effect_min: int = 0

    def matches(self, vector: RiskVector) -> bool:
        return (
            vector.action_level >= self.action_min
            and vector.object_level >= self.object_min
            and vector.context_level >= self.context_min
            and vector.effect_level >= self.effect_min
        )


@dataclass(frozen=True)
class PolicyConfig:
    action_levels: dict[Action, int]
    object_rules: tuple[ObjectRule, ...]
    context_rules: tuple[ContextRule, ...]
    context_default: int
    effect_levels: dict[EffectClass, int]
    effect_rules: tuple[EffectRule, ...]
    effect_defaults: dict[Action, EffectClass]
    thresholds: tuple[int, int, int]
    overrides: tuple[OverrideRule, ...]
    decision_table: dict[SecurityLevel, Decision]
    confirmation_channel: bool
    denylist_classes: frozenset[ObjectClass]
    denylist_patterns: tuple[str, ...]
    remote_write_allowlist: tuple[str, ...]
    remote_floor: int
    ttl_default_ms: int
    ttl_max_ms: int

    # -- serialization ---------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "schema": "opplane-policy/1",
            "action_levels": {a.value: lv for a, lv in sorted(self.action_levels.items(), key=lambda kv: kv[0].value)},
            "object_rules": [
                {"pattern": r.pattern, "object_class": r.object_class.value, "level": r.level}
                for r in self.object_rules
            ],
            "context_rules": [_context_rule_doc(r) for r in self.context_rules],
            "context_default": self.context_default,
            "effect_levels": {e.value: lv for e, lv in sorted(self.effect_levels.items(), key=lambda kv: kv[0].value)},
            "effect_rules": [
                {
                    "effect": r.effect.value,
                    **({"actions": list(r.actions)} if r.actions else {}),
                    **({"object_classes": list(r.object_classes)} if r.object_classes else {}),
                }
                for r in self.effect_rules
            ],
            "effect_defaults": {a.value: e.value for a, e in sorted(self.effect_defaults.items(), key=lambda kv: kv[0].value)},
            "aggregation": {
                "thresholds": list(self.thresholds),
                "overrides": [_override_doc(o) for o in self.overrides],
            },
            "decision_table": {
                lv.label: d.value for lv, d in sorted(self.decision_table.items())
            },
            "chi": {
                "confirmation_channel": self.confirmation_channel,
                "denylist_classes": sorted(c.value for c in self.denylist_classes),
                "denylist_patterns": list(self.denylist_patterns),
                "remote_write_allowlist": list(self.remote_write_allowlist),
            },
            "remote_floor": self.remote_floor,
            "ttl_default_ms": self.ttl_default_ms,
            "ttl_max_ms": self.ttl_max_ms,
        }

    def with_chi(
        self,
        confirmation_channel: bool | None = None,
        denylist_classes=None,
        denylist_patterns=None,
        remote_write_allowlist=None,
    ) -> "PolicyConfig":
        """Variant policy with selected chi conditions replaced."""
        doc = self.to_doc()
        chi = doc["chi"]
        if confirmation_channel is not None:
            chi["confirmation_channel"] = confirmation_channel
        if denylist_classes is not None:
            chi["denylist_classes"] = list(denylist_classes)
        if denylist_patterns is not None:
            chi["denylist_patterns"] = list(denylist_patterns)
        if remote_write_allowlist is not None:
            chi["remote_write_allowlist"] = list(remote_write_allowlist)
        return policy_from_doc(doc)


def _context_rule_doc(rule: ContextRule) -> dict:
    doc: dict = {"level": rule.level}
    if rule.origins:
        doc["origins"] = list(rule.origins)
    for name in ("task_consistent", "user_present", "cross_boundary", "chained"):
        value = getattr(rule, name)
        if value is not None:
            doc[name] = value
    return doc


def _override_doc(rule: OverrideRule) -> dict:
    doc: dict = {"level": rule.level}
    for name in ("action_min", "object_min", "context_min", "effect_min"):
        value = getattr(rule, name)
        if value:
            doc[name] = value
    return doc


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise PolicyError(f"{path}: {message}")


def _int_level(value, path: str, lo: int = 0, hi: int = 3) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), path, "must be an integer")
    _require(lo <= value <= hi, path, f"must be in {lo}..{hi}")
    return value


def policy_from_doc(doc: dict) -> PolicyConfig:
    """Build and validate a PolicyConfig from a parsed policy document."""
    _require(isinstance(doc, dict), "$", "policy document must be an object")
    schema = doc.get("schema")
    _require(schema == "opplane-policy/1", "schema", f"unsupported schema {schema!r}")

    raw_actions = doc.get("action_levels")
    _require(isinstance(raw_actions, dict), "action_levels", "must be an object")
    action_levels: dict[Action, int] = {}
    for name, value in raw_actions.items():
        try:
            action = Action(name)
        except ValueError:
            raise PolicyError(f"action_levels.{name}: unknown action") from None
        action_levels[action] = _int_level(value, f"action_levels.{name}")
    missing = [a.value for a in Action if a not in action_levels]
    _require(not missing, "action_levels", f"missing actions: {missing}")

    raw_rules = doc.get("object_rules")
    _require(isinstance(raw_rules, list) and raw_rules, "object_rules", "must be a non-empty list")
    object_rules = []
    for i, raw in enumerate(raw_rules):
        path = f"object_rules[{i}]"
        _require(isinstance(raw, dict), path, "must be an object")
        pattern = raw.get("pattern")
        _require(isinstance(pattern, str) and pattern, f"{path}.pattern", "must be a non-empty string")
        try:
            object_class = ObjectClass(raw.get("object_class"))
        except ValueError:
            raise PolicyError(f"{path}.object_class: unknown class {raw.get('object_class')!r}") from None
        level = _int_level(raw.get("level"), f"{path}.level")
        object_rules.append(ObjectRule(pattern, object_class, level))
    _require(
        object_rules[-1].pattern == "*",
        f"object_rules[{len(object_rules) - 1}].pattern",
        "last object rule must be the catch-all pattern '*'",
    )

    raw_ctx = doc.get("context_rules", [])
    _require(isinstance(raw_ctx, list), "context_rules", "must be a list")
    context_rules = []
    known_origins = {o.value for o in Origin}
    for i, raw in enumerate(raw_ctx):
        path = f"context_rules[{i}]"
        _require(isinstance(raw, dict), path, "must be an object")
        level = _int_level(raw.get("level"), f"{path}.level")
        origins = tuple(raw.get("origins", ()))
        for origin in origins:
            _require(origin in known_origins, f"{path}.origins", f"unknown origin {origin!r}")
        kwargs = {}
        for name in ("task_consistent", "user_present", "cross_boundary", "chained"):
            if name in raw:
                _require(isinstance(raw[name], bool), f"{path}.{name}", "must be boolean")
                kwargs[name] = raw[name]
        context_rules.append(ContextRule(level=level, origins=origins, **kwargs))
    context_default = _int_level(doc.get("context_default", 0), "context_default")

    raw_effects = doc.get("effect_levels")
    _require(isinstance(raw_effects, dict), "effect_levels", "must be an object")
    effect_levels: dict[EffectClass, int] = {}
    for name, value in raw_effects.items():
        try:
            effect = EffectClass(name)
        except ValueError:
            raise PolicyError(f"effect_levels.{name}: unknown effect class") from None
        effect_levels[effect] = _int_level(value, f"effect_levels.{name}")
    missing = [e.value for e in EffectClass if e not in effect_levels]
    _require(not missing, "effect_levels", f"missing effect classes: {missing}")

    raw_erules = doc.get("effect_rules", [])
    _require(isinstance(raw_erules, list), "effect_rules", "must be a list")
    effect_rules = []
    known_actions = {a.value for a in Action}
    known_classes = {c.value for c in ObjectClass}
    for i, raw in enumerate(raw_erules):
        path = f"effect_rules[{i}]"
        _require(isinstance(raw, dict), path, "must be an object")
        try:
            effect = EffectClass(raw.get("effect"))
        except ValueError:
            raise PolicyError(f"{path}.effect: unknown effect class {raw.get('effect')!r}") from None
        actions = tuple(raw.get("actions", ()))
        for a in actions:
            _require(a in known_actions, f"{path}.actions", f"unknown action {a!r}")
        classes = tuple(raw.get("object_classes", ()))
        for c in classes:
            _require(c in known_classes, f"{path}.object_classes", f"unknown class {c!r}")
        effect_rules.append(EffectRule(effect=effect, actions=actions, object_classes=classes))

    raw_defaults = doc.get("effect_defaults")
    _require(isinstance(raw_defaults, dict), "effect_defaults", "must be an object")
    effect_defaults: dict[Action, EffectClass] = {}
    for name, value in raw_defaults.items():
        try:
            action = Action(name)
        except ValueError:
            raise PolicyError(f"effect_defaults.{name}: unknown action") from None
        try:
            effect_defaults[action] = EffectClass(value)
        except ValueError:
            raise PolicyError(f"effect_defaults.{name}: unknown effect class {value!r}") from None
    missing = [a.value for a in Action if a not in effect_defaults]
    _require(not missing, "effect_defaults", f"missing actions: {missing}")

    agg = doc.get("aggregation")
    _require(isinstance(agg, dict), "aggregation", "must be an object")
    raw_thresholds = agg.get("thresholds")
    _require(
        isinstance(raw_thresholds, list) and len(raw_thresholds) == 3,
        "aggregation.thresholds",
        "must be a list of three score cutoffs",
    )
    thresholds = []
    for i, value in enumerate(raw_thresholds):
        thresholds.append(_int_level(value, f"aggregation.thresholds[{i}]", lo=0, hi=12))
    _require(
        thresholds[0] < thresholds[1] < thresholds[2],
        "aggregation.thresholds",
        "must be strictly increasing",
    )
    overrides = []
    raw_overrides = agg.get("overrides", [])
    _require(isinstance(raw_overrides, list), "aggregation.overrides", "must be a list")
    for i, raw in enumerate(raw_overrides):
        path = f"aggregation.overrides[{i}]"
        _require(isinstance(raw, dict), path, "must be an object")
        level = _int_level(raw.get("level"), f"{path}.level")
        kwargs = {}
        for name in ("action_min", "object_min", "context_min", "effect_min"):
            if name in raw:
                kwargs[name] = _int_level(raw[name], f"{path}.{name}")
        unknown = set(raw) - {"level", "action_min", "object_min", "context_min", "effect_min"}
        _require(not unknown, path, f"unknown override fields: {sorted(unknown)}")
        overrides.append(OverrideRule(level=level, **kwargs))

    raw_table = doc.get("decision_table")
    _require(isinstance(raw_table, dict), "decision_table", "must be an object")
    decision_table: dict[SecurityLevel, Decision] = {}
    for label, value in raw_table.items():
        try:
            level = SecurityLevel.from_label(label)
        except (ValueError, KeyError):
            raise PolicyError(f"decision_table.{label}: unknown level label") from None
        _require(level < SecurityLevel.L3, f"decision_table.{label}", "L3 branch is fixed by chi, not the table")
        try:
            decision_table[level] = Decision(value)
        except ValueError:
            raise PolicyError(f"decision_table.{label}: unknown decision {value!r}") from None
    for level in (SecurityLevel.L0, SecurityLevel.L1, SecurityLevel.L2):
        _require(level in decision_table, "decision_table", f"missing entry for {level.label}")

    chi = doc.get("chi")
    _require(isinstance(chi, dict), "chi", "must be an object")
    confirmation = chi.get("confirmation_channel")
    _require(isinstance(confirmation, bool), "chi.confirmation_channel", "must be boolean")
    denylist_classes = set()
    for i, name in enumerate(chi.get("denylist_classes", [])):
        try:
            denylist_classes.add(ObjectClass(name))
        except ValueError:
            raise PolicyError(f"chi.denylist_classes[{i}]: unknown class {name!r}") from None
    denylist_patterns = tuple(chi.get("denylist_patterns", ()))
    for i, pattern in enumerate(denylist_patterns):
        _require(isinstance(pattern, str) and pattern, f"chi.denylist_patterns[{i}]", "must be a non-empty string")
    allowlist = tuple(chi.get("remote_write_allowlist", ()))
    for i, pattern in enumerate(allowlist):
        _require(isinstance(pattern, str) and pattern, f"chi.remote_write_allowlist[{i}]", "must be a non-empty string")

    remote_floor = _int_level(doc.get("remote_floor", 0), "remote_floor")
    ttl_default = doc.get("ttl_default_ms", 30_000)
    _require(isinstance(ttl_default, int) and ttl_default > 0, "ttl_default_ms", "must be a positive integer")
    ttl_max = doc.get("ttl_max_ms", 60_000)
    _require(isinstance(ttl_max, int) and ttl_max >= ttl_default, "ttl_max_ms", "must be >= ttl_default_ms")

    return PolicyConfig(
        action_levels=action_levels,
        object_rules=tuple(object_rules),
        context_rules=tuple(context_rules),
        context_default=context_default,
        effect_levels=effect_levels,
        effect_rules=tuple(effect_rules),
        effect_defaults=effect_defaults,
        thresholds=(thresholds[0], thresholds[1], thresholds[2]),
        overrides=tuple(overrides),
        decision_table=decision_table,
        confirmation_channel=confirmation,
        denylist_classes=frozenset(denylist_classes),
        denylist_patterns=denylist_patterns,
        remote_write_allowlist=allowlist,
        remote_floor=remote_floor,
        ttl_default_ms=ttl_default,
        ttl_max_ms=ttl_max,
    )


def load_policy(path: str | Path) -> PolicyConfig:
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise PolicyError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return policy_from_doc(doc)


def default_policy_doc() -> dict:
    """The shipped default policy tables."""
    return {
        "schema": "opplane-policy/1",
        "action_levels": {
            "read": 0,
            "write": 1,
            "copy": 1,
            "rename": 1,
            "execute": 2,
            "invoke": 2,
            "modify": 2,
            "configure": 2,
            "send": 3,
        },
        "object_rules": [
            {"pattern": "/etc/passwd", "object_class": "critical", "level": 3},
            {"pattern": "/etc/shadow", "object_class": "critical", "level": 3},
            {"pattern": "/etc/ssh/*", "object_class": "critical", "level": 3},
            {"pattern": "/etc/systemd/system/*", "object_class": "critical", "level": 3},
            {"pattern": "~/.ssh/*", "object_class": "critical", "level": 3},
            {"pattern": "curl *|*", "object_class": "critical", "level": 3},
            {"pattern": "wget *|*", "object_class": "critical", "level": 3},
            {"pattern": "~/.bashrc", "object_class": "sensitive", "level": 2},
            {"pattern": "~/.profile", "object_class": "sensitive", "level": 2},
            {"pattern": "/etc/os-release", "object_class": "public", "level": 0},
            {"pattern": "/proc/*", "object_class": "public", "level": 0},
            {"pattern": "/workspace/*", "object_class": "ordinary", "level": 1},
            {"pattern": "*", "object_class": "ordinary", "level": 1},
        ],
        "context_rules": [
            {"level": 3, "chained": True},
            {"level": 2, "origins": ["browser", "plugin"]},
            {"level": 2, "cross_boundary": True},
            {"level": 1, "origins": ["remote"]},
            {"level": 1, "task_consistent": False},
        ],
        "context_default": 0,
        "effect_levels": {
            "none": 0,
            "ordinary-modification": 1,
            "sensitive-disclosure": 2,
            "integrity-or-privilege": 3,
            "externalization": 3,
        },
        "effect_rules": [
            {
                "effect": "externalization",
                "actions": ["send"],
                "object_classes": ["sensitive", "critical"],
            },
            {
                "effect": "integrity-or-privilege",
                "actions": ["write", "copy", "rename", "modify", "configure"],
                "object_classes": ["critical"],
            },
            {
                "effect": "integrity-or-privilege",
                "actions": ["execute", "invoke"],
                "object_classes": ["critical"],
            },
            {
                "effect": "sensitive-disclosure",
                "actions": ["read"],
                "object_classes": ["sensitive", "critical"],
            },
        ],
        "effect_defaults": {
            "read": "none",
            "write": "ordinary-modification",
            "copy": "ordinary-modification",
            "rename": "ordinary-modification",
            "execute": "ordinary-modification",
            "invoke": "ordinary-modification",
            "modify": "ordinary-modification",
            "configure": "ordinary-modification",
            "send": "externalization",
        },
        "aggregation": {
            "thresholds": [3, 5, 7],
            "overrides": [
                {"level": 3, "object_min": 3, "action_min": 1},
                {"level": 3, "effect_min": 3},
            ],
        },
        "decision_table": {"L0": "d_ree", "L1": "d_ia", "L2": "d_ie"},
        "chi": {
            "confirmation_channel": True,
            "denylist_classes": ["critical"],
            "denylist_patterns": ["curl *|*", "wget *|*"],
            "remote_write_allowlist": [],
        },
        "remote_floor": 1,
        "ttl_default_ms": 30_000,
        "ttl_max_ms": 60_000,
    }


def default_policy() -> PolicyConfig:
    return policy_from_doc(default_policy_doc())


# -- model operations ----------------------------------------------------


def classify_object(path: str, policy: PolicyConfig) -> tuple[ObjectClass, int]:
    """First matching object rule wins; validation guarantees a catch-all."""
    if not isinstance(path, str) or not path:
        raise ValueError("object descriptor must be a non-empty string")
    for rule in policy.object_rules:
        if fnmatchcase(path, rule.pattern):
            return rule.object_class, rule.level
    raise PolicyError("object_rules: no rule matched (catch-all missing)")


def context_level(ctx: Context, policy: PolicyConfig) -> int:
    best: int | None = None
    for rule in policy.context_rules:
        if rule.matches(ctx):
            best = rule.level if best is None else max(best, rule.level)
    return policy.context_default if best is None else best


def infer_effect(action: Action, obj: ObjectRef, ctx: Context, policy: PolicyConfig) -> EffectClass:
    """Plane-side effect inference from action, object class, and context."""
    for rule in policy.effect_rules:
        if rule.matches(action, obj.object_class):
            return rule.effect
    return policy.effect_defaults[action]


def build_instance(
    subject: str,
    action: Action | str,
    path: str,
    context: Context,
    policy: PolicyConfig,
    effect: EffectClass | str | None = None,
) -> OperationInstance:
    """Construct a fully resolved instance; effect inferred unless supplied."""
    action = Action(action)
    obj = ObjectRef.resolve(path, policy)
    if effect is None:
        effect = infer_effect(action, obj, context, policy)
    return OperationInstance(
        subject=subject,
        action=action,
        object=obj,
        context=context,
        effect=EffectClass(effect),
    )


def project(instance: OperationInstance, policy: PolicyConfig) -> RiskVector:
    """Map an instance onto its four-component risk vector."""
    _, object_level = classify_object(instance.object.path, policy)
    return RiskVector(
        action_level=policy.action_levels[instance.action],
        object_level=object_level,
        context_level=context_level(instance.context, policy),
        effect_level=policy.effect_levels[instance.effect],
    )


def _threshold_level(score: int, thresholds: tuple[int, int, int]) -> SecurityLevel:
    if score <= thresholds[0]:
        return SecurityLevel.L0
    if score <= thresholds[1]:
        return SecurityLevel.L1
    if score <= thresholds[2]:
        return SecurityLevel.L2
    return SecurityLevel.L3


def classify(vector: RiskVector, instance: OperationInstance, policy: PolicyConfig) -> SecurityLevel:
    """Aggregate a risk vector into a security level.

    Threshold scoring first, then monotone overrides, then the remote floor.
    """
    level = _threshold_level(vector.score(), policy.thresholds)
    for rule in policy.overrides:
        if rule.matches(vector):
            level = max(level, SecurityLevel(rule.level))
    if instance.context.origin is Origin.REMOTE:
        level = max(level, SecurityLevel(policy.remote_floor))
    return SecurityLevel(level)


def _denylisted(instance: OperationInstance, policy: PolicyConfig) -> bool:
    if instance.object.object_class in policy.denylist_classes:
        return True
    return any(fnmatchcase(instance.object.path, p) for p in policy.denylist_patterns)


def _remote_write_blocked(instance: OperationInstance, policy: PolicyConfig) -> bool:
    if instance.context.origin is not Origin.REMOTE:
        return False
    if instance.action not in WRITE_CLASS:
        return False
    return not any(
        fnmatchcase(instance.object.path, p) for p in policy.remote_write_allowlist
    )


def confirmation_possible(instance: OperationInstance, policy: PolicyConfig) -> bool:
    """The chi predicate: can this operation be surfaced for confirmation."""
    if not policy.confirmation_channel:
        return False
    if _denylisted(instance, policy):
        return False
    if _remote_write_blocked(instance, policy):
        return False
    return True


def decide(level: SecurityLevel, instance: OperationInstance, policy: PolicyConfig) -> Decision:
    """Map a security level to an enforcement decision.

    The mandatory denylist and the remote-write allowlist are hard gates that
    force d_deny at any level. L3 resolves to d_uc only when confirmation is
    actually possible, otherwise d_deny.
    """
    if _denylisted(instance, policy):
        return Decision.DENY
    if _remote_write_blocked(instance, policy):
        return Decision.DENY
    if level < SecurityLevel.L3:
        return policy.decision_table[level]
    return Decision.UC if confirmation_possible(instance, policy) else Decision.DENY


def need_iso(decision: Decision) -> bool:
    """False only for ordinary-path execution."""
    return decision is not Decision.REE


def evaluate(instance: OperationInstance, policy: PolicyConfig) -> tuple[RiskVector, SecurityLevel, Decision]:
    vector = project(instance, policy)
    level = classify(vector, instance, policy)
    return vector, level, decide(level, instance, policy)
