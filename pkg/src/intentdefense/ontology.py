"""In-memory knowledge base of offensive/defensive techniques and digital artifacts.

The KB encodes techniques as sets of property restrictions over digital
artifact classes. Offensive restrictions may carry the ``may-`` qualifier,
meaning the engagement is optional for attack instances of the technique.

Queries answered here:

* which restrictions of an offensive technique apply to an attack instance,
* which defensive techniques manage a given artifact class through a property,
* which defensive techniques share the exact same defensive objective,
* which (technique, property) pairs can counter one offensive restriction.

The textual KB format is documented in :func:`load_knowledge_base`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    DanglingReferenceError,
    DuplicateIdError,
    InvalidKnowledgeBase,
    KBParseError,
    UnknownIdentifierError,
    UnknownRestrictionError,
)


class OffensiveCategory(str, Enum):
    ALTER = "Alter"
    GENERATE = "Generate"
    EXPLOIT = "Exploit"
    REMOVE = "Remove"


class DefensiveCategory(str, Enum):
    EVICT = "Evict"
    ISOLATE = "Isolate"
    RESTORE = "Restore"


class Side(str, Enum):
    OFFENSIVE = "offensive"
    DEFENSIVE = "defensive"


# Rows: defensive category. Columns: offensive category.
_COMPATIBILITY: dict[DefensiveCategory, dict[OffensiveCategory, bool]] = {
    DefensiveCategory.EVICT: {
        OffensiveCategory.ALTER: True,
        OffensiveCategory.GENERATE: True,
        OffensiveCategory.EXPLOIT: True,
        OffensiveCategory.REMOVE: False,
    },
    DefensiveCategory.ISOLATE: {
        OffensiveCategory.ALTER: True,
        OffensiveCategory.GENERATE: True,
        OffensiveCategory.EXPLOIT: True,
        OffensiveCategory.REMOVE: False,
    },
    DefensiveCategory.RESTORE: {
        OffensiveCategory.ALTER: True,
        OffensiveCategory.GENERATE: False,
        OffensiveCategory.EXPLOIT: True,
        OffensiveCategory.REMOVE: True,
    },
}


def compatible(off_cat: OffensiveCategory, def_cat: DefensiveCategory) -> bool:
    """Whether a defensive property category can counter an offensive one."""
    return _COMPATIBILITY[DefensiveCategory(def_cat)][OffensiveCategory(off_cat)]


@dataclass(frozen=True)
class PropertyDef:
    name: str
    side: Side
    category: OffensiveCategory | DefensiveCategory


@dataclass(frozen=True)
class ArtifactClass:
    name: str
    parent: str | None = None
    required_attributes: frozenset[str] = frozenset()


@dataclass(frozen=True, order=True)
class Restriction:
    property: str
    artifact_class: str
    optional: bool = False

    @property
    def pair(self) -> tuple[str, str]:
        return (self.property, self.artifact_class)


@dataclass(frozen=True)
class OffensiveTechnique:
    id: str
    name: str
    restrictions: frozenset[Restriction]


@dataclass(frozen=True)
class DefensiveTechnique:
    id: str
    name: str
    restrictions: frozenset[Restriction]


@dataclass(frozen=True)
class Violation:
    entity: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable container; build with :meth:`from_parts` or the loader.

    The constructor itself never raises so that malformed KBs can be
    inspected with :func:`validate_kb`.
    """

    properties: Mapping[tuple[str, Side], PropertyDef] = field(default_factory=dict)
    artifact_classes: Mapping[str, ArtifactClass] = field(default_factory=dict)
    offensive_techniques: Mapping[str, OffensiveTechnique] = field(default_factory=dict)
    defensive_techniques: Mapping[str, DefensiveTechnique] = field(default_factory=dict)

    @classmethod
    def from_parts(
        cls,
        properties: Iterable[PropertyDef] = (),
        artifact_classes: Iterable[ArtifactClass] = (),
        offensive_techniques: Iterable[OffensiveTechnique] = (),
        defensive_techniques: Iterable[DefensiveTechnique] = (),
    ) -> "KnowledgeBase":
        props: dict[tuple[str, Side], PropertyDef] = {}
        for p in properties:
            key = (p.name, Side(p.side))
            if key in props:
                raise DuplicateIdError(f"{p.name} ({key[1].value})", "property")
            props[key] = p
        arts: dict[str, ArtifactClass] = {}
        for a in artifact_classes:
            if a.name in arts:
                raise DuplicateIdError(a.name, "artifact")
            arts[a.name] = a
        ots: dict[str, OffensiveTechnique] = {}
        for t in offensive_techniques:
            if t.id in ots:
                raise DuplicateIdError(t.id, "offensive_technique")
            ots[t.id] = t
        dts: dict[str, DefensiveTechnique] = {}
        for t in defensive_techniques:
            if t.id in dts:
                raise DuplicateIdError(t.id, "defensive_technique")
            dts[t.id] = t
        return cls(props, arts, ots, dts)

    # -- lookups -----------------------------------------------------------

    def offensive(self, technique_id: str) -> OffensiveTechnique:
        try:
            return self.offensive_techniques[technique_id]
        except KeyError:
            raise UnknownIdentifierError(technique_id, "offensive technique") from None

    def defensive(self, technique_id: str) -> DefensiveTechnique:
        try:
            return self.defensive_techniques[technique_id]
        except KeyError:
            raise UnknownIdentifierError(technique_id, "defensive technique") from None

    def artifact(self, name: str) -> ArtifactClass:
        try:
            return self.artifact_classes[name]
        except KeyError:
            raise UnknownIdentifierError(name, "artifact class") from None

    def property_def(self, name: str, side: Side) -> PropertyDef:
        try:
            return self.properties[(name, Side(side))]
        except KeyError:
            raise UnknownIdentifierError(name, f"{Side(side).value} property") from None

    def offensive_category(self, prop: str) -> OffensiveCategory:
        return OffensiveCategory(self.property_def(prop, Side.OFFENSIVE).category)

    def defensive_category(self, prop: str) -> DefensiveCategory:
        return DefensiveCategory(self.property_def(prop, Side.DEFENSIVE).category)

    def ancestors(self, name: str) -> list[str]:
        """``name`` followed by its parent chain (cycle-safe)."""
        chain = []
        seen = set()
        current: str | None = name
        while current is not None and current not in seen:
            seen.add(current)
            chain.append(current)
            art = self.artifact_classes.get(current)
            current = art.parent if art is not None else None
        return chain

    def is_subclass(self, name: str, ancestor: str) -> bool:
        return ancestor in self.ancestors(name)

    def required_attributes(self, name: str) -> frozenset[str]:
        attrs: set[str] = set()
        for cls_name in self.ancestors(name):
            art = self.artifact_classes.get(cls_name)
            if art is not None:
                attrs |= art.required_attributes
        return frozenset(attrs)


# -- queries -------------------------------------------------------------------


def valid_restrictions(
    ot: OffensiveTechnique, engaged: Iterable[tuple[str, str]] = ()
) -> frozenset[Restriction]:
    """Restrictions that hold for an attack instance engaging ``engaged`` pairs.

    Mandatory restrictions always hold. An optional restriction holds only if
    its (property, artifact_class) pair is engaged; the ``may-`` qualifier is
    dropped in the result.
    """
    by_pair = {r.pair: r for r in ot.restrictions}
    result = {r for r in ot.restrictions if not r.optional}
    for pair in engaged:
        pair = tuple(pair)
        if pair not in by_pair:
            raise UnknownRestrictionError(
                f"{ot.id} has no restriction {pair[0]} {pair[1]}"
            )
        result.add(replace(by_pair[pair], optional=False))
    return frozenset(result)


def _class_matches(kb: KnowledgeBase, candidate: str, target: str, subclasses: bool) -> bool:
    if candidate == target:
        return True
    return subclasses and kb.is_subclass(candidate, target)


def inverse_defensive_lookup(
    kb: KnowledgeBase, artifact_class: str, def_property: str, *, subclasses: bool = True
) -> frozenset[DefensiveTechnique]:
    """All defensive techniques managing ``artifact_class`` through ``def_property``.

    With ``subclasses`` (default) a restriction on a subclass of
    ``artifact_class`` also matches.
    """
    kb.artifact(artifact_class)
    kb.property_def(def_property, Side.DEFENSIVE)
    return frozenset(
        dt
        for dt in kb.defensive_techniques.values()
        if any(
            r.property == def_property
            and _class_matches(kb, r.artifact_class, artifact_class, subclasses)
            for r in dt.restrictions
        )
    )


def equivalence_class(
    kb: KnowledgeBase, dt: DefensiveTechnique | str, *, subclasses: bool = True
) -> frozenset[DefensiveTechnique]:
    """Intersection of the inverse lookups over every restriction of ``dt``."""
    if isinstance(dt, str):
        dt = kb.defensive(dt)
    members: set[DefensiveTechnique] | None = None
    for r in dt.restrictions:
        found = inverse_defensive_lookup(kb, r.artifact_class, r.property, subclasses=subclasses)
        members = set(found) if members is None else members & found
    return frozenset(members or {dt})


def counter_techniques(
    kb: KnowledgeBase,
    ot: OffensiveTechnique | str,
    restriction: Restriction,
    *,
    subclasses: bool = True,
) -> frozenset[tuple[DefensiveTechnique, str]]:
    """(technique, defensive property) pairs that may invalidate ``ot`` via one restriction.

    A defensive restriction matches when it targets the same artifact class
    or one of its superclasses, and the two property categories are
    compatible.
    """
    if isinstance(ot, str):
        ot = kb.offensive(ot)
    if restriction.pair not in {r.pair for r in ot.restrictions}:
        raise UnknownRestrictionError(
            f"{ot.id} has no restriction {restriction.property} {restriction.artifact_class}"
        )
    off_cat = kb.offensive_category(restriction.property)
    kb.artifact(restriction.artifact_class)
    out = set()
    for dt in kb.defensive_techniques.values():
        for r in dt.restrictions:
            if not _class_matches(kb, restriction.artifact_class, r.artifact_class, subclasses):
                continue
            if compatible(off_cat, kb.defensive_category(r.property)):
                out.add((dt, r.property))
    return frozenset(out)


# -- validation ----------------------------------------------------------------


def validate_kb(kb: KnowledgeBase) -> list[Violation]:
    """Return every invariant violation; empty means the KB is well-formed."""
    out: list[Violation] = []

    for (name, side), p in kb.properties.items():
        expected = OffensiveCategory if side is Side.OFFENSIVE else DefensiveCategory
        if not isinstance(p.category, expected):
            out.append(Violation(f"property {name}", "category-side",
                                 f"{p.category!r} is not a {side.value} category"))

    for art in kb.artifact_classes.values():
        ent = f"artifact {art.name}"
        if art.parent is not None and art.parent not in kb.artifact_classes:
            out.append(Violation(ent, "dangling-parent", f"parent {art.parent!r} is undeclared"))
    # Cycle detection: report each cycle once, keyed by its member set.
    seen_cycles: set[frozenset[str]] = set()
    for art in kb.artifact_classes.values():
        path: list[str] = []
        current: str | None = art.name
        while current is not None and current in kb.artifact_classes and current not in path:
            path.append(current)
            current = kb.artifact_classes[current].parent
        if current is not None and current in path:
            cycle = frozenset(path[path.index(current):])
            if cycle not in seen_cycles:
                seen_cycles.add(cycle)
                out.append(Violation(f"artifact {current}", "taxonomy-cycle",
                                     "parent links form a cycle: " + " -> ".join(sorted(cycle))))
    for art in kb.artifact_classes.values():
        parent = kb.artifact_classes.get(art.parent) if art.parent else None
        if parent is not None and not parent.required_attributes <= art.required_attributes:
            missing = sorted(parent.required_attributes - art.required_attributes)
            out.append(Violation(f"artifact {art.name}", "inherited-attributes",
                                 f"missing inherited attributes {missing}"))

    for side, techniques in ((Side.OFFENSIVE, kb.offensive_techniques),
                             (Side.DEFENSIVE, kb.defensive_techniques)):
        for tid, t in techniques.items():
            ent = f"{side.value}_technique {tid}"
            if t.id != tid:
                out.append(Violation(ent, "id-key", f"stored under {tid!r} but id is {t.id!r}"))
            if not t.restrictions:
                out.append(Violation(ent, "non-empty", "technique has no restrictions"))
            for r in sorted(t.restrictions):
                if (r.property, side) not in kb.properties:
                    out.append(Violation(ent, "dangling-property",
                                         f"{side.value} property {r.property!r} is undeclared"))
                if r.artifact_class not in kb.artifact_classes:
                    out.append(Violation(ent, "dangling-artifact",
                                         f"artifact {r.artifact_class!r} is undeclared"))
                if side is Side.DEFENSIVE and r.optional:
                    out.append(Violation(ent, "defensive-optional",
                                         f"defensive restriction {r.property} {r.artifact_class} "
                                         "cannot carry the may- qualifier"))
    return out


# -- text format ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>[{};])
  | (?P<word>[^\s{};"#]+)
    """,
    re.VERBOSE,
)

_KEYWORDS = ("property", "artifact", "offensive_technique", "defensive_technique")


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise KBParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "string":
            text = m.group()[1:-1].replace('\\"', '"').replace("\\\\", "\\")
            tokens.append(_Token("string", text, line, pos - line_start + 1))
        elif kind in ("punct", "word"):
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, what: str) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("eof", "", 1, 1)
            raise KBParseError(f"unexpected end of input, expected {what}", last.line, last.col)
        self.i += 1
        return tok

    def word(self, what: str) -> _Token:
        tok = self.next(what)
        if tok.kind != "word":
            raise KBParseError(f"expected {what}, got {tok.text!r}", tok.line, tok.col)
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next(repr(text))
        if tok.text != text or tok.kind == "string":
            raise KBParseError(f"expected {text!r}, got {tok.text!r}", tok.line, tok.col)
        return tok


def _parse(source: str):
    p = _Parser(_tokenize(source))
    props, arts, ots, dts = [], [], [], []
    # Reference sites for dangling-reference errors, kept with their positions.
    refs: list[tuple[str, str, _Token]] = []
    while p.peek() is not None:
        kw = p.word("a statement keyword")
        if kw.text == "property":
            name = p.word("property name")
            side_tok = p.word("offensive|defensive")
            cat_tok = p.word("category")
            try:
                side = Side(side_tok.text)
            except ValueError:
                raise KBParseError(f"invalid side {side_tok.text!r}", side_tok.line, side_tok.col) from None
            enum = OffensiveCategory if side is Side.OFFENSIVE else DefensiveCategory
            try:
                cat = enum(cat_tok.text)
            except ValueError:
                raise KBParseError(
                    f"invalid {side.value} category {cat_tok.text!r}", cat_tok.line, cat_tok.col
                ) from None
            props.append((PropertyDef(name.text, side, cat), name))
        elif kw.text == "artifact":
            name = p.word("artifact name")
            parent = None
            required: frozenset[str] = frozenset()
            while (tok := p.peek()) is not None and tok.kind == "word" and tok.text in ("extends", "requires"):
                p.next(tok.text)
                if tok.text == "extends":
                    ptok = p.word("parent artifact")
                    parent = ptok.text
                    refs.append(("artifact", parent, ptok))
                else:
                    attrs = p.word("attribute list")
                    required = frozenset(a for a in attrs.text.split(",") if a)
            arts.append((ArtifactClass(name.text, parent, required), name))
        elif kw.text in ("offensive_technique", "defensive_technique"):
            side = Side.OFFENSIVE if kw.text == "offensive_technique" else Side.DEFENSIVE
            tid = p.word("technique id")
            title = p.next("quoted technique name")
            if title.kind != "string":
                raise KBParseError("expected quoted technique name", title.line, title.col)
            p.expect("{")
            restrictions = set()
            while True:
                tok = p.peek()
                if tok is not None and tok.text == "}" and tok.kind == "punct":
                    p.next("}")
                    break
                prop_tok = p.word("restriction property")
                art_tok = p.word("restriction artifact")
                p.expect(";")
                prop, optional = prop_tok.text, False
                if prop.startswith("may-"):
                    if side is Side.DEFENSIVE:
                        raise KBParseError("defensive restrictions cannot be optional",
                                           prop_tok.line, prop_tok.col)
                    prop, optional = prop[4:], True
                refs.append((f"{side.value} property", prop, prop_tok))
                refs.append(("artifact", art_tok.text, art_tok))
                restrictions.add(Restriction(prop, art_tok.text, optional))
            cls = OffensiveTechnique if side is Side.OFFENSIVE else DefensiveTechnique
            (ots if side is Side.OFFENSIVE else dts).append(
                (cls(tid.text, title.text, frozenset(restrictions)), tid)
            )
        else:
            raise KBParseError(
                f"unknown statement {kw.text!r} (expected one of {', '.join(_KEYWORDS)})",
                kw.line, kw.col,
            )
    return props, arts, ots, dts, refs


def parse_knowledge_base(source: str) -> KnowledgeBase:
    """Parse KB text. Raises parse, duplicate-id, dangling-reference or invariant errors.

    Format (``#`` starts a comment; statement order is free)::

        property <name> offensive|defensive <category>
        artifact <name> [extends <parent>] [requires a,b,...]
        offensive_technique <id> "<name>" { [may-]<property> <artifact>; ... }
        defensive_technique <id> "<name>" { <property> <artifact>; ... }

    Required attributes are inherited: the loaded class carries its own
    attributes plus those of every ancestor.
    """
    props, arts, ots, dts, refs = _parse(source)

    def check_dupes(items, kind, key):
        seen = {}
        for obj, tok in items:
            k = key(obj)
            if k in seen:
                raise DuplicateIdError(k if isinstance(k, str) else f"{k[0]} ({k[1].value})", kind)
            seen[k] = tok

    check_dupes(props, "property", lambda p: (p.name, p.side))
    check_dupes(arts, "artifact", lambda a: a.name)
    check_dupes(ots + dts, "technique id", lambda t: t.id)

    art_names = {a.name for a, _ in arts}
    prop_keys = {(p.name, p.side.value) for p, _ in props}
    for kind, ident, tok in refs:
        if kind == "artifact":
            ok = ident in art_names
        else:
            ok = (ident, kind.split()[0]) in prop_keys
        if not ok:
            raise DanglingReferenceError(ident, f"{kind} reference at line {tok.line}, column {tok.col}")

    raw = KnowledgeBase.from_parts([p for p, _ in props], [a for a, _ in arts])
    resolved = []
    for a, _ in arts:
        resolved.append(replace(a, required_attributes=raw.required_attributes(a.name)))
    kb = KnowledgeBase.from_parts(
        [p for p, _ in props], resolved, [t for t, _ in ots], [t for t, _ in dts]
    )
    violations = validate_kb(kb)
    if violations:
        raise InvalidKnowledgeBase(violations)
    return kb


def load_knowledge_base(source: str | Path) -> KnowledgeBase:
    """Load a KB from a path, a bundled fixture name, or raw text.

    Strings containing a newline are treated as KB text.
    """
    if isinstance(source, Path) or "\n" not in str(source):
        path = resolve_data_path(str(source))
        return parse_knowledge_base(path.read_text(encoding="utf-8"))
    return parse_knowledge_base(source)


def resolve_data_path(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = Path(__file__).parent / "data" / path.name
    if bundled.exists():
        return bundled
    raise FileNotFoundError(name)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_knowledge_base(kb: KnowledgeBase) -> str:
    """Deterministic text rendering; the loader inverts it exactly."""
    lines: list[str] = []
    for (name, side), p in sorted(kb.properties.items(), key=lambda kv: (kv[0][1].value, kv[0][0])):
        lines.append(f"property {name} {side.value} {p.category.value}")
    if lines:
        lines.append("")
    for name in sorted(kb.artifact_classes):
        a = kb.artifact_classes[name]
        line = f"artifact {name}"
        if a.parent:
            line += f" extends {a.parent}"
        if a.required_attributes:
            line += " requires " + ",".join(sorted(a.required_attributes))
        lines.append(line)
    for keyword, techniques in (("offensive_technique", kb.offensive_techniques),
                                ("defensive_technique", kb.defensive_techniques)):
        for tid in sorted(techniques):
            t = techniques[tid]
            lines.append("")
            lines.append(f"{keyword} {tid} {_quote(t.name)} {{")
            for r in sorted(t.restrictions):
                prefix = "may-" if r.optional else ""
                lines.append(f"    {prefix}{r.property} {r.artifact_class};")
            lines.append("}")
    return "\n".join(lines) + "\n"

