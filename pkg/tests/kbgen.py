"""Hypothesis strategy for small random knowledge bases."""

from __future__ import annotations

from hypothesis import strategies as st

from intentdefense.ontology import (
    ArtifactClass,
    DefensiveCategory,
    DefensiveTechnique,
    KnowledgeBase,
    OffensiveCategory,
    OffensiveTechnique,
    PropertyDef,
    Restriction,
    Side,
)


@st.composite
def knowledge_bases(draw, max_artifacts=6, max_dts=7, max_ots=4):
    n_art = draw(st.integers(1, max_artifacts))
    artifacts = []
    for i in range(n_art):
        parent = draw(st.one_of(st.none(), st.integers(0, i - 1))) if i else None
        artifacts.append(ArtifactClass(f"A{i}", None if parent is None else f"A{parent}"))
    off_props = [PropertyDef(f"o{i}", Side.OFFENSIVE, c) for i, c in enumerate(
        draw(st.lists(st.sampled_from(list(OffensiveCategory)), min_size=1, max_size=4)))]
    def_props = [PropertyDef(f"d{i}", Side.DEFENSIVE, c) for i, c in enumerate(
        draw(st.lists(st.sampled_from(list(DefensiveCategory)), min_size=1, max_size=3)))]
    art_names = [a.name for a in artifacts]

    def restrictions(props, optional_ok):
        pairs = draw(st.lists(
            st.tuples(st.sampled_from([p.name for p in props]), st.sampled_from(art_names),
                      st.booleans() if optional_ok else st.just(False)),
            min_size=1, max_size=3, unique_by=lambda t: (t[0], t[1])))
        return frozenset(Restriction(p, a, o) for p, a, o in pairs)

    dts = [DefensiveTechnique(f"D{i}", f"D{i}", restrictions(def_props, False))
           for i in range(draw(st.integers(1, max_dts)))]
    ots = [OffensiveTechnique(f"T{i}", f"T{i}", restrictions(off_props, True))
           for i in range(draw(st.integers(1, max_ots)))]
    return KnowledgeBase.from_parts(off_props + def_props, artifacts, ots, dts)


def ancestors_or_self(kb: KnowledgeBase, name: str) -> set[str]:
    """Walk parent links directly; independent of the library's taxonomy helpers."""
    out = {name}
    cur = kb.artifact_classes[name].parent
    while cur is not None and cur not in out:
        out.add(cur)
        cur = kb.artifact_classes[cur].parent
    return out
