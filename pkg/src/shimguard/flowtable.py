"""Match and action stages: rule table plus microflow and megaflow caches.

One SwitchState is the full forwarding state of a switch: the rule list is
the slow path, consulted on cache miss; each miss installs a megaflow entry
masked down to exactly the fields rule selection consulted, and a microflow
entry pointing at it. Disabling the megaflow cache turns the switch into a
pure slow-path device, which is how the benchmark isolates slow-path cost.

The cache-correctness contract: for any rule set and packet sequence, the
dispositions with caches enabled equal the dispositions with caches disabled,
packet for packet.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .extract import MemoryModel, ParserMode, ParserProfile, extract
from .packet import (
    ETHERTYPE_MPLS_UNICAST,
    MPLS_ETHERTYPES,
    FlowKey,
    MplsLse,
    ParseStatus,
    RawFrame,
    parse_ipv4,
    parse_mac,
    parse_status,
)

MICROFLOW_CAPACITY = 4096


class RuleParseError(ValueError):
    """Base class for rule-file problems; carries the 1-based line number."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class RuleSyntaxError(RuleParseError):
    pass


class UnknownFieldError(RuleParseError):
    def __init__(self, line: int, name: str) -> None:
        super().__init__(line, f"unknown field {name!r}")
        self.name = name


class DuplicateFieldError(RuleParseError):
    def __init__(self, line: int, name: str) -> None:
        super().__init__(line, f"duplicate field {name!r}")
        self.name = name


# --- actions ----------------------------------------------------------------


@dataclass(frozen=True)
class Output:
    port: int

    def __str__(self) -> str:
        return f"output:{self.port}"


@dataclass(frozen=True)
class Drop:
    def __str__(self) -> str:
        return "drop"


@dataclass(frozen=True)
class ToController:
    def __str__(self) -> str:
        return "controller"


@dataclass(frozen=True)
class PushMpls:
    lse: MplsLse

    def __str__(self) -> str:
        return f"push_mpls:{self.lse.label}"


@dataclass(frozen=True)
class PopMpls:
    def __str__(self) -> str:
        return "pop_mpls"


Action = Output | Drop | ToController | PushMpls | PopMpls


# --- dispositions -----------------------------------------------------------


@dataclass(frozen=True)
class Forwarded:
    ports: tuple[int, ...]

    def __str__(self) -> str:
        return "Forwarded(" + ",".join(str(p) for p in self.ports) + ")"


@dataclass(frozen=True)
class Dropped:
    def __str__(self) -> str:
        return "Dropped"


@dataclass(frozen=True)
class SentToController:
    def __str__(self) -> str:
        return "SentToController"


Disposition = Forwarded | Dropped | SentToController


def push_mpls(key: FlowKey, lse: MplsLse) -> FlowKey:
    """Prepend a label; remembers the covered ethertype so pop can restore it."""
    if key.ethertype in MPLS_ETHERTYPES:
        ethertype = key.ethertype
        under = key.mpls_under_ethertype
    else:
        ethertype = ETHERTYPE_MPLS_UNICAST
        under = key.ethertype
    return key._replace(
        mpls_labels=(lse,) + key.mpls_labels,
        mpls_depth_seen=key.mpls_depth_seen + 1,
        ethertype=ethertype,
        mpls_under_ethertype=under,
    )


def pop_mpls(key: FlowKey) -> FlowKey:
    """Remove the top label; no-op (signalled by identity) without one."""
    if not key.mpls_labels:
        return key
    rest = key.mpls_labels[1:]
    depth = max(0, key.mpls_depth_seen - 1)
    if rest:
        return key._replace(mpls_labels=rest, mpls_depth_seen=depth)
    ethertype = key.mpls_under_ethertype if key.mpls_under_ethertype is not None else key.ethertype
    return key._replace(
        mpls_labels=(),
        mpls_depth_seen=depth,
        ethertype=ethertype,
        mpls_under_ethertype=None,
    )


def apply_actions(key: FlowKey, actions: Sequence[Action], stats: dict | None = None) -> tuple[Disposition, FlowKey]:
    ports: list[int] = []
    to_controller = False
    for action in actions:
        if isinstance(action, Output):
            ports.append(action.port)
        elif isinstance(action, ToController):
            to_controller = True
        elif isinstance(action, PushMpls):
            key = push_mpls(key, action.lse)
        elif isinstance(action, PopMpls):
            if not key.mpls_labels and stats is not None:
                stats["pop_mpls_noop"] += 1
            key = pop_mpls(key)
    if ports:
        return Forwarded(tuple(ports)), key
    if to_controller:
        return SentToController(), key
    return Dropped(), key


# --- matching ---------------------------------------------------------------


def _mpls_label(key: FlowKey):
    top = key.mpls_top
    return top.label if top else None


def _mpls_s(key: FlowKey):
    top = key.mpls_top
    return int(top.bottom_of_stack) if top else None


FIELD_GETTERS: dict[str, Callable[[FlowKey], object]] = {
    "in_port": lambda k: k.in_port,
    "eth_src": lambda k: k.eth_src,
    "eth_dst": lambda k: k.eth_dst,
    "eth_type": lambda k: k.ethertype,
    "mpls_label": _mpls_label,
    "mpls_s": _mpls_s,
    "ip_src": lambda k: k.ip_src,
    "ip_dst": lambda k: k.ip_dst,
    "ip_proto": lambda k: k.ip_proto,
    "l4_src": lambda k: k.l4_src,
    "l4_dst": lambda k: k.l4_dst,
    "parse_status": lambda k: k.parse_status,
}


@dataclass(frozen=True)
class Rule:
    """Priority, field->value matches (absent field = wildcard), actions."""

    priority: int
    match: tuple[tuple[str, object], ...]
    actions: tuple[Action, ...]

    def matches(self, key: FlowKey) -> bool:
        for name, value in self.match:
            if FIELD_GETTERS[name](key) != value:
                return False
        return True

    def fields(self) -> frozenset[str]:
        return frozenset(name for name, _ in self.match)

    def __str__(self) -> str:
        matches = ", ".join(f"{n}={_format_value(n, v)}" for n, v in self.match)
        acts = ",".join(str(a) for a in self.actions)
        middle = f"{matches}, " if matches else ""
        return f"priority={self.priority}, {middle}actions={acts}"


def _format_value(name: str, value) -> str:
    if name == "eth_type":
        return f"0x{value:04x}"
    if name in ("eth_src", "eth_dst"):
        return ":".join(f"{b:02x}" for b in value)
    if name in ("ip_src", "ip_dst"):
        return ".".join(str((value >> s) & 0xFF) for s in (24, 16, 8, 0))
    return str(value)


@dataclass
class MegaflowEntry:
    """A wildcard cache entry: values of the masked fields plus the actions."""

    mask: tuple[str, ...]
    masked_key: dict[str, object]
    actions: tuple[Action, ...]
    hits: int = 0

    def describe(self) -> str:
        fields = " ".join(f"{n}={_format_value(n, self.masked_key[n])}" for n in self.mask)
        acts = ",".join(str(a) for a in self.actions)
        return f"mask[{','.join(self.mask)}] {{{fields}}} -> {acts} hits={self.hits}"


STAT_KEYS = (
    "processed",
    "slow_path_upcalls",
    "fast_path_hits",
    "forwards",
    "drops",
    "to_controller",
    "no_rule_match",
    "pop_mpls_noop",
)


class SwitchState:
    """Rules plus caches plus counters for one switch. Single-writer."""

    def __init__(
        self,
        rules: Iterable[Rule] = (),
        megaflow_enabled: bool = True,
        default_actions: Sequence[Action] = (Drop(),),
        microflow_capacity: int = MICROFLOW_CAPACITY,
    ) -> None:
        self.rules: list[Rule] = list(rules)
        self.megaflow_enabled = megaflow_enabled
        self.default_actions = tuple(default_actions)
        self.microflow_capacity = microflow_capacity
        self.microflow: OrderedDict[FlowKey, MegaflowEntry] = OrderedDict()
        self.megaflows: dict[tuple[str, ...], dict[tuple, MegaflowEntry]] = {}
        self.stats: dict[str, int] = {k: 0 for k in STAT_KEYS}
        # Scan order: descending priority, ties by file order. For each scan
        # position, the union of match fields of every rule at that priority
        # or higher (the mask rule selection must preserve).
        self._ordered = sorted(range(len(self.rules)), key=lambda i: (-self.rules[i].priority, i))
        self._consulted: list[frozenset[str]] = []
        acc: frozenset[str] = frozenset()
        for idx in self._ordered:
            acc |= self.rules[idx].fields()
            self._consulted.append(acc)
        self._all_fields = acc

    def set_megaflow_enabled(self, enabled: bool) -> None:
        self.megaflow_enabled = enabled
        if not enabled:
            self.microflow.clear()
            self.megaflows.clear()

    def megaflow_entry_count(self) -> int:
        return sum(len(table) for table in self.megaflows.values())

    # -- lookup paths --

    def _consulted_fields(self, scan_pos: int | None) -> frozenset[str]:
        """Fields examined by rules of priority >= the winner's priority."""
        if scan_pos is None:
            return self._all_fields
        priority = self.rules[self._ordered[scan_pos]].priority
        end = scan_pos
        while end + 1 < len(self._ordered) and self.rules[self._ordered[end + 1]].priority == priority:
            end += 1
        return self._consulted[end]

    def _scan_rules(self, key: FlowKey) -> int | None:
        for pos, idx in enumerate(self._ordered):
            if self.rules[idx].matches(key):
                return pos
        return None

    def _lookup_fast(self, key: FlowKey) -> MegaflowEntry | None:
        entry = self.microflow.get(key)
        if entry is not None:
            self.microflow.move_to_end(key)
            return entry
        for mask, table in self.megaflows.items():
            projection = tuple(FIELD_GETTERS[name](key) for name in mask)
            entry = table.get(projection)
            if entry is not None:
                self._install_microflow(key, entry)
                return entry
        return None

    def _install_microflow(self, key: FlowKey, entry: MegaflowEntry) -> None:
        if len(self.microflow) >= self.microflow_capacity:
            self.microflow.popitem(last=False)
        self.microflow[key] = entry

    def _upcall(self, key: FlowKey) -> tuple[Action, ...]:
        self.stats["slow_path_upcalls"] += 1
        scan_pos = self._scan_rules(key)
        if scan_pos is None:
            self.stats["no_rule_match"] += 1
            actions = self.default_actions
        else:
            actions = self.rules[self._ordered[scan_pos]].actions
        # The slow path always derives the cache entry (that computation is
        # part of upcall handling); disabling the megaflow cache only stops
        # the entry from being stored.
        mask = tuple(sorted(self._consulted_fields(scan_pos)))
        entry = MegaflowEntry(
            mask=mask,
            masked_key={name: FIELD_GETTERS[name](key) for name in mask},
            actions=actions,
        )
        if self.megaflow_enabled:
            projection = tuple(entry.masked_key[name] for name in mask)
            self.megaflows.setdefault(mask, {})[projection] = entry
            self._install_microflow(key, entry)
        return actions

    def process(
        self,
        frame: RawFrame,
        in_port: int,
        profile: ParserProfile,
        memory: MemoryModel | None = None,
    ) -> Disposition:
        """Extract, look up, act. Returns the packet's disposition."""
        self.stats["processed"] += 1
        result = extract(frame, in_port, profile, memory)
        if profile.mode is ParserMode.HARDENED and result.verdict.value == "Drop":
            self.stats["drops"] += 1
            return Dropped()
        entry = self._lookup_fast(result.key) if self.megaflow_enabled else None
        if entry is not None:
            entry.hits += 1
            self.stats["fast_path_hits"] += 1
            actions = entry.actions
        else:
            actions = self._upcall(result.key)
        disposition, _ = apply_actions(result.key, actions, self.stats)
        if isinstance(disposition, Forwarded):
            self.stats["forwards"] += 1
        elif isinstance(disposition, SentToController):
            self.stats["to_controller"] += 1
        else:
            self.stats["drops"] += 1
        return disposition


def process(
    frame: RawFrame,
    in_port: int,
    state: SwitchState,
    profile: ParserProfile,
    memory: MemoryModel | None = None,
) -> Disposition:
    return state.process(frame, in_port, profile, memory)


# --- rule file format ---------------------------------------------------------

_FIELD_PARSERS: dict[str, Callable[[str], object]] = {
    "in_port": int,
    "eth_src": parse_mac,
    "eth_dst": parse_mac,
    "eth_type": lambda v: int(v, 0),
    "mpls_label": lambda v: int(v, 0),
    "mpls_s": int,
    "ip_src": parse_ipv4,
    "ip_dst": parse_ipv4,
    "ip_proto": lambda v: int(v, 0),
    "l4_src": lambda v: int(v, 0),
    "l4_dst": lambda v: int(v, 0),
    "parse_status": parse_status,
}


def _parse_action(token: str, lineno: int) -> Action:
    token = token.strip()
    if token == "drop":
        return Drop()
    if token == "controller":
        return ToController()
    if token == "pop_mpls":
        return PopMpls()
    if token.startswith("output:"):
        try:
            return Output(int(token.split(":", 1)[1]))
        except ValueError:
            raise RuleSyntaxError(lineno, f"bad output port in {token!r}") from None
    if token.startswith("push_mpls:"):
        try:
            return PushMpls(MplsLse(int(token.split(":", 1)[1], 0), bottom_of_stack=True))
        except ValueError:
            raise RuleSyntaxError(lineno, f"bad label in {token!r}") from None
    raise RuleSyntaxError(lineno, f"unknown action {token!r}")


def load_rules(text: str) -> list[Rule]:
    """Parse the line-oriented rule format.

    ``priority=<int>, <field>=<value>[, ...], actions=<act>[,<act>...]``
    with ``#`` comments. Rules keep file order, which breaks priority ties.
    """
    rules: list[Rule] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, tail = line.partition("actions=")
        if not sep:
            raise RuleSyntaxError(lineno, "missing actions=")
        if not tail.strip():
            raise RuleSyntaxError(lineno, "empty action list")
        actions = tuple(_parse_action(tok, lineno) for tok in tail.split(","))

        priority: int | None = None
        match: list[tuple[str, object]] = []
        seen: set[str] = set()
        for token in head.split(","):
            token = token.strip()
            if not token:
                continue
            name, eq, value = token.partition("=")
            name = name.strip()
            value = value.strip()
            if not eq or not value:
                raise RuleSyntaxError(lineno, f"expected key=value, got {token!r}")
            if name == "priority":
                if priority is not None:
                    raise DuplicateFieldError(lineno, "priority")
                try:
                    priority = int(value)
                except ValueError:
                    raise RuleSyntaxError(lineno, f"bad priority {value!r}") from None
                continue
            if name not in _FIELD_PARSERS:
                raise UnknownFieldError(lineno, name)
            if name in seen:
                raise DuplicateFieldError(lineno, name)
            seen.add(name)
            try:
                match.append((name, _FIELD_PARSERS[name](value)))
            except ValueError as exc:
                raise RuleSyntaxError(lineno, f"bad value for {name}: {exc}") from None
        if priority is None:
            raise RuleSyntaxError(lineno, "missing priority=")
        rules.append(Rule(priority=priority, match=tuple(match), actions=actions))
    return rules


def dump_state(state: SwitchState) -> str:
    """Deterministic textual report of rules, cache contents and counters."""
    lines = [f"rules: {len(state.rules)}"]
    for rule in state.rules:
        lines.append(f"  {rule}")
    if not state.megaflow_enabled:
        lines.append("caches: disabled")
    else:
        lines.append(
            f"caches: microflow={len(state.microflow)}/{state.microflow_capacity}"
            f" megaflow={state.megaflow_entry_count()}"
        )
        for table in state.megaflows.values():
            for entry in table.values():
                lines.append(f"  {entry.describe()}")
    counters = " ".join(f"{k}={state.stats[k]}" for k in STAT_KEYS)
    lines.append(f"counters: {counters}")
    return "\n".join(lines) + "\n"
