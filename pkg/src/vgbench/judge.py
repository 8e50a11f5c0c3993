"""Judging: diagnosis matching, candidate extraction, and referral checks.

Matching is graded against a curated condition graph under a fixed rubric:
five match rules and three non-match rules, tried in a strict precedence
order.  Pairs the graph cannot decide are left unresolved and queued for a
human judge; equivalent free-text descriptions in particular are never
decided automatically.
"""

from __future__ import annotations

import re
import json
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .corpus import ClinicalVignette, Corpus, SPECIALTIES
from .orchestrator import ROLE_AI, Conversation

MATCH_RULES: tuple[str, ...] = ("M1", "M2", "M3", "M4", "M5")
NONMATCH_RULES: tuple[str, ...] = ("N1", "N2", "N3")
UNRESOLVED = "UNRESOLVED"
NO_DIAGNOSIS = "NO_DIAGNOSIS"

RULE_LABELS: dict[str, str] = {
    "M1": "ExactCorrespondence",
    "M2": "AlternativeTerminology",
    "M3": "IncreasedSpecificity",
    "M4": "EquivalentDescription",
    "M5": "DirectCausation",
    "N1": "NearMatchLessPrecise",
    "N2": "UmbrellaTerm",
    "N3": "SymptomaticOverlap",
    UNRESOLVED: "Unresolved",
    NO_DIAGNOSIS: "NoDiagnosis",
}

# Rules a human judge may assign.  M4 exists only on this path: free-text
# equivalence is a judgment call, never decided by the graph.
HUMAN_RULES: tuple[str, ...] = MATCH_RULES + NONMATCH_RULES

JUDGE_KINDS = ("automated", "human", "pending")

AUTOMATED_JUDGE_ID = "rubric-engine/kg-1"

EDGE_TYPES = ("synonym", "parent_of", "causes", "near_match", "overlap")


class GraphError(ValueError):
    pass


class InvalidRule(ValueError):
    pass


class UnknownCase(KeyError):
    pass


class NoDiagnosisExtracted(ValueError):
    """No assessment-bearing turn named a known condition."""


def normalize_condition(name: str) -> str:
    """Case-fold, drop parentheticals and punctuation, collapse whitespace."""
    s = name.lower()
    s = re.sub(r"\([^)]*\)", " ", s)
    s = re.sub(r"[^a-z0-9']+", " ", s)
    return " ".join(s.split())


@dataclass(frozen=True)
class MatchVerdict:
    rule: str
    detail: str = ""

    def __post_init__(self) -> None:
        if self.rule not in RULE_LABELS:
            raise InvalidRule(f"unknown rule {self.rule!r}")

    @property
    def matched(self) -> bool:
        return self.rule in MATCH_RULES

    @property
    def unresolved(self) -> bool:
        return self.rule == UNRESOLVED

    @property
    def label(self) -> str:
        return RULE_LABELS[self.rule]


@dataclass
class ConditionGraph:
    """Typed graph over canonical condition names.

    Synonym edges form equivalence classes; parent_of edges (umbrella to
    specific) must stay acyclic across those classes; causes, near_match,
    and overlap are curated relations used by single rubric rules each.
    """

    canonical: list[str] = field(default_factory=list)
    names: dict[str, int] = field(default_factory=dict)  # normalized -> node
    vocabulary: dict[str, int] = field(default_factory=dict)  # incl. synonyms
    _syn_parent: list[int] = field(default_factory=list)
    parents: dict[int, set[int]] = field(default_factory=dict)  # class -> classes
    causes_edges: dict[int, set[int]] = field(default_factory=dict)
    near_edges: dict[int, set[int]] = field(default_factory=dict)
    overlap_edges: dict[int, set[int]] = field(default_factory=dict)

    def add_node(self, name: str, synonyms: tuple[str, ...] = ()) -> int:
        norm = normalize_condition(name)
        if not norm:
            raise GraphError(f"empty node name {name!r}")
        if norm in self.vocabulary:
            raise GraphError(f"duplicate condition name {name!r}")
        node = len(self.canonical)
        self.canonical.append(name)
        self.names[norm] = node
        self.vocabulary[norm] = node
        self._syn_parent.append(node)
        for syn in synonyms:
            ns = normalize_condition(syn)
            if not ns:
                raise GraphError(f"empty synonym on node {name!r}")
            if ns in self.vocabulary and self.vocabulary[ns] != node:
                raise GraphError(f"synonym {syn!r} already names another condition")
            self.vocabulary[ns] = node
        return node

    def resolve(self, name: str) -> int | None:
        return self.vocabulary.get(normalize_condition(name))

    def _find(self, node: int) -> int:
        while self._syn_parent[node] != node:
            self._syn_parent[node] = self._syn_parent[self._syn_parent[node]]
            node = self._syn_parent[node]
        return node

    def _union(self, a: int, b: int) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra != rb:
            self._syn_parent[max(ra, rb)] = min(ra, rb)

    def add_edge(self, kind: str, src_name: str, dst_name: str) -> None:
        if kind not in EDGE_TYPES:
            raise GraphError(f"unknown edge type {kind!r}")
        src = self.resolve(src_name)
        dst = self.resolve(dst_name)
        if src is None:
            raise GraphError(f"edge references unknown condition {src_name!r}")
        if dst is None:
            raise GraphError(f"edge references unknown condition {dst_name!r}")
        if kind == "synonym":
            self._union(src, dst)
        elif kind == "parent_of":
            self.parents.setdefault(dst, set()).add(src)
        elif kind == "causes":
            self.causes_edges.setdefault(src, set()).add(dst)
        elif kind == "near_match":
            self.near_edges.setdefault(src, set()).add(dst)
        else:  # overlap, symmetric
            self.overlap_edges.setdefault(src, set()).add(dst)
            self.overlap_edges.setdefault(dst, set()).add(src)

    def rep(self, node: int) -> int:
        return self._find(node)

    def _class_parents(self, node_class: int) -> set[int]:
        out: set[int] = set()
        for child, parent_set in self.parents.items():
            if self._find(child) == node_class:
                out.update(self._find(p) for p in parent_set)
        return out

    def is_strict_descendant(self, node: int, ancestor: int) -> bool:
        """True when ``node`` sits strictly below ``ancestor`` via parent_of."""
        start, target = self._find(node), self._find(ancestor)
        if start == target:
            return False
        seen = {start}
        frontier = [start]
        while frontier:
            current = frontier.pop()
            for parent in self._class_parents(current):
                if parent == target:
                    return True
                if parent not in seen:
                    seen.add(parent)
                    frontier.append(parent)
        return False

    def _class_linked(self, edges: dict[int, set[int]], src: int, dst: int) -> bool:
        s, d = self._find(src), self._find(dst)
        for a, targets in edges.items():
            if self._find(a) == s and any(self._find(t) == d for t in targets):
                return True
        return False

    def causes_link(self, src: int, dst: int) -> bool:
        return self._class_linked(self.causes_edges, src, dst)

    def near_link(self, src: int, dst: int) -> bool:
        return self._class_linked(self.near_edges, src, dst)

    def overlap_link(self, src: int, dst: int) -> bool:
        return self._class_linked(self.overlap_edges, src, dst)

    def validate(self) -> None:
        # parent_of must be acyclic over synonym classes, and an umbrella
        # relation within one synonym class is contradictory.
        class_edges: dict[int, set[int]] = {}
        for child, parent_set in self.parents.items():
            c = self._find(child)
            for p in parent_set:
                pc = self._find(p)
                if pc == c:
                    raise GraphError(
                        f"parent_of inside a synonym class at {self.canonical[child]!r}"
                    )
                class_edges.setdefault(c, set()).add(pc)
        colors: dict[int, int] = {}

        def visit(node: int, stack: list[int]) -> None:
            colors[node] = 1
            for parent in class_edges.get(node, ()):
                if colors.get(parent) == 1:
                    raise GraphError(
                        f"parent_of cycle through {self.canonical[parent]!r}"
                    )
                if colors.get(parent, 0) == 0:
                    visit(parent, stack + [parent])
            colors[node] = 2

        for node in class_edges:
            if colors.get(node, 0) == 0:
                visit(node, [node])


def load_condition_graph(path: str | Path) -> ConditionGraph:
    """Load a graph from JSONL: node records first or interleaved, then edges."""
    graph = ConditionGraph()
    text = Path(path).read_text(encoding="utf-8")
    edges: list[tuple[int, dict]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from exc
        if "node" in record:
            graph.add_node(record["node"], tuple(record.get("synonyms", ())))
        elif "edge" in record:
            edges.append((line_no, record))
        else:
            raise GraphError(f"{path}:{line_no}: record is neither node nor edge")
    for line_no, record in edges:
        try:
            graph.add_edge(record["edge"], record["src"], record["dst"])
        except (KeyError, GraphError) as exc:
            raise GraphError(f"{path}:{line_no}: {exc}") from exc
    graph.validate()
    return graph


_BUNDLED_GRAPH: ConditionGraph | None = None


def bundled_graph() -> ConditionGraph:
    global _BUNDLED_GRAPH
    if _BUNDLED_GRAPH is None:
        with resources.as_file(
            resources.files("vgbench.data").joinpath("condition_graph.jsonl")
        ) as p:
            _BUNDLED_GRAPH = load_condition_graph(p)
    return _BUNDLED_GRAPH


def match_diagnosis(predicted: str, gold: str, kg: ConditionGraph) -> MatchVerdict:
    """Grade a predicted condition against the gold condition.

    Rules are tried in precedence order M1, M2, M3, M5, N2, N1, N3; pairs no
    rule covers come back unresolved for human review.  Free-text equivalence
    (M4) is never assigned here.
    """
    p = normalize_condition(predicted)
    g = normalize_condition(gold)
    if not p or not g:
        raise ValueError("predicted and gold conditions must be non-empty")
    if p == g:
        return MatchVerdict("M1", detail=f"{predicted!r} is the gold condition")
    pid = kg.resolve(p)
    gid = kg.resolve(g)
    if pid is None or gid is None:
        unknown = predicted if pid is None else gold
        return MatchVerdict(UNRESOLVED, detail=f"condition {unknown!r} not in graph")
    if kg.rep(pid) == kg.rep(gid):
        return MatchVerdict("M2", detail=f"{predicted!r} names the same condition as {gold!r}")
    if kg.is_strict_descendant(pid, gid):
        return MatchVerdict("M3", detail=f"{predicted!r} is a more specific form of {gold!r}")
    if kg.causes_link(pid, gid):
        return MatchVerdict("M5", detail=f"{predicted!r} directly causes {gold!r}")
    if kg.is_strict_descendant(gid, pid):
        return MatchVerdict("N2", detail=f"{predicted!r} is an umbrella term over {gold!r}")
    if kg.near_link(pid, gid):
        return MatchVerdict("N1", detail=f"{predicted!r} is close to but less precise than {gold!r}")
    if kg.overlap_link(pid, gid):
        return MatchVerdict("N3", detail=f"{predicted!r} only shares symptoms with {gold!r}")
    return MatchVerdict(UNRESOLVED, detail=f"no rubric rule relates {predicted!r} to {gold!r}")


# --- candidate extraction -------------------------------------------------


# Specialist words an assistant uses when recommending a referral.
SPECIALIST_TERMS: tuple[tuple[str, str], ...] = (
    ("cardiologist", "Cardiovascular"),
    ("dermatologist", "Dermatology"),
    ("endocrinologist", "Endocrine"),
    ("otolaryngologist", "ENT"),
    ("ent specialist", "ENT"),
    ("ear nose and throat", "ENT"),
    ("gastroenterologist", "Gastroenterology"),
    ("hematologist", "Hematology"),
    ("infectious disease specialist", "Infectious diseases"),
    ("infectious diseases specialist", "Infectious diseases"),
    ("nephrologist", "Nephrology"),
    ("neurologist", "Neurology"),
    ("gynecologist", "Obstetrics and Gynecology"),
    ("obstetrician", "Obstetrics and Gynecology"),
    ("ophthalmologist", "Ophthalmology"),
    ("orthopedist", "Orthopedics and Rheumatology"),
    ("orthopedic", "Orthopedics and Rheumatology"),
    ("rheumatologist", "Orthopedics and Rheumatology"),
    ("pulmonologist", "Respiratory"),
    ("urologist", "Urology"),
)


@dataclass(frozen=True)
class ExtractedCandidates:
    """Ranked condition hypotheses plus any explicit specialist referral."""

    diagnoses: tuple[str, ...]  # surface forms, rank order, at most two
    referral: str | None = None  # canonical specialty, when explicitly named


def _vocabulary_pattern(kg: ConditionGraph) -> re.Pattern[str]:
    terms = sorted(kg.vocabulary, key=len, reverse=True)
    alternation = "|".join(
        r"[\s-]+".join(re.escape(part) for part in term.split()) for term in terms
    )
    return re.compile(r"\b(?:" + alternation + r")\b", re.IGNORECASE)


def _conditions_in(text: str, kg: ConditionGraph, pattern: re.Pattern[str]) -> list[tuple[str, int]]:
    """(surface form, node id) for each condition mention, in text order,
    deduplicated by node."""
    seen: set[int] = set()
    out: list[tuple[str, int]] = []
    for m in pattern.finditer(text):
        node = kg.resolve(m.group(0))
        if node is None or node in seen:
            continue
        seen.add(node)
        out.append((" ".join(m.group(0).split()), node))
    return out


def _specialist_pattern(term: str) -> re.Pattern[str]:
    # Word boundaries matter: "neurologist" must not register as the
    # embedded "urologist".
    parts = [re.escape(p) for p in term.split()]
    return re.compile(r"\b" + r"[\s-]+".join(parts) + r"\b", re.IGNORECASE)


_SPECIALIST_PATTERNS = [
    (_specialist_pattern(term), specialty) for term, specialty in SPECIALIST_TERMS
]


def _find_referral(text: str) -> str | None:
    best: tuple[int, str] | None = None
    for pattern, specialty in _SPECIALIST_PATTERNS:
        for m in pattern.finditer(text):
            if best is None or m.start() > best[0]:
                best = (m.start(), specialty)
    return best[1] if best else None


def extract_candidates(conversation: Conversation, kg: ConditionGraph) -> ExtractedCandidates:
    """Pull ranked diagnosis candidates from the assistant's assessment turns.

    The scan is closed-world over the graph vocabulary.  Candidates come from
    the latest assessment-bearing AI turn first, in order of appearance,
    backfilled from earlier assessment turns if that yields fewer than two.
    Raises NoDiagnosisExtracted when no AI turn names a known condition.
    """
    pattern = _vocabulary_pattern(kg)
    per_turn: list[list[tuple[str, int]]] = []
    referral: str | None = None
    for turn in conversation.turns:
        if turn.role != ROLE_AI:
            continue
        mentions = _conditions_in(turn.text, kg, pattern)
        if mentions:
            per_turn.append(mentions)
        found = _find_referral(turn.text)
        if found is not None:
            referral = found
    if not per_turn:
        raise NoDiagnosisExtracted(
            f"no assessment with a known condition in conversation {conversation.id}"
        )
    ranked: list[str] = []
    seen: set[int] = set()
    for mentions in reversed(per_turn):
        for surface, node in mentions:
            if node not in seen:
                seen.add(node)
                ranked.append(surface)
        if len(ranked) >= 2:
            break
    return ExtractedCandidates(diagnoses=tuple(ranked[:2]), referral=referral)


# --- referral resolution --------------------------------------------------


def load_specialty_map(path: str | Path, corpus: Corpus | None = None) -> dict[str, str]:
    """TSV of normalized condition name to specialty.

    With a corpus given, every gold diagnosis must be covered; a gap is a
    configuration error, reported up front rather than mid-run.
    """
    table: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{line_no}: expected 2 tab-separated fields")
        name, specialty = parts[0].strip(), parts[1].strip()
        if specialty not in SPECIALTIES:
            raise ValueError(f"{path}:{line_no}: unknown specialty {specialty!r}")
        table[normalize_condition(name)] = specialty
    if corpus is not None:
        missing = sorted(
            {
                v.gold_diagnosis
                for v in corpus
                if normalize_condition(v.gold_diagnosis) not in table
            }
        )
        if missing:
            raise ValueError(f"specialty map misses corpus conditions: {missing}")
    return table


def bundled_specialty_map() -> dict[str, str]:
    with resources.as_file(
        resources.files("vgbench.data").joinpath("specialty_map.tsv")
    ) as p:
        return load_specialty_map(p)


def resolve_referral(
    candidates: ExtractedCandidates,
    vignette: ClinicalVignette,
    specialty_map: dict[str, str],
) -> bool | None:
    """Decide whether the assistant pointed at the right specialty.

    An explicit specialist recommendation wins; otherwise the rank-1
    diagnosis is mapped through the condition-to-specialty table.  Returns
    None when neither route resolves, leaving the point to a human judge.
    """
    specialty: str | None = None
    if candidates.referral is not None:
        specialty = candidates.referral
    elif candidates.diagnoses:
        specialty = specialty_map.get(normalize_condition(candidates.diagnoses[0]))
    if specialty is None:
        return None
    return specialty == vignette.gold_specialty


# --- case judgment --------------------------------------------------------


@dataclass(frozen=True)
class CaseJudgment:
    case_id: str
    vignette_id: str
    candidates: tuple[str, ...]
    top1_verdict: MatchVerdict
    top2_verdict: MatchVerdict
    referral_specialty: str | None
    referral_correct: bool | None
    judge_kind: str
    judge_id: str
    rationale: str = ""
    extraction_failed: bool = False
    history: tuple[dict, ...] = ()

    def __post_init__(self) -> None:
        if self.judge_kind not in JUDGE_KINDS:
            raise InvalidRule(f"unknown judge kind {self.judge_kind!r}")
        if self.top1_verdict.matched and not self.top2_verdict.matched:
            raise InvalidRule("top-2 includes rank 1: top1 match forces top2 match")

    @property
    def needs_human(self) -> bool:
        # A human-confirmed no-diagnosis keeps extraction_failed as metadata
        # but is a settled outcome, so the flag itself is not a criterion.
        return (
            self.judge_kind == "pending"
            or self.top1_verdict.unresolved
            or self.top2_verdict.unresolved
            or self.referral_correct is None
        )

    @property
    def resolved(self) -> bool:
        return self.judge_kind in ("automated", "human") and not self.needs_human


_RULE_PRECEDENCE = {r: i for i, r in enumerate(("M1", "M2", "M3", "M4", "M5", "N2", "N1", "N3", UNRESOLVED, NO_DIAGNOSIS))}


def _best_verdict(predicted: str, vignette: ClinicalVignette, kg: ConditionGraph) -> MatchVerdict:
    """Best rubric outcome across the gold name and its accepted synonyms."""
    verdict = match_diagnosis(predicted, vignette.gold_diagnosis, kg)
    for alias in vignette.gold_synonyms:
        candidate = match_diagnosis(predicted, alias, kg)
        if candidate.rule == "M1":
            # Identical to an accepted alternative name, not to the gold
            # label itself: that is alternative terminology.
            candidate = MatchVerdict(
                "M2", detail=f"{predicted!r} equals accepted synonym {alias!r}"
            )
        if _RULE_PRECEDENCE[candidate.rule] < _RULE_PRECEDENCE[verdict.rule]:
            verdict = candidate
    return verdict


def judge_case(
    conversation: Conversation,
    vignette: ClinicalVignette,
    kg: ConditionGraph,
    specialty_map: dict[str, str],
) -> CaseJudgment:
    """Apply the automated rubric to one finished conversation.

    Unresolvable components leave the judgment pending for human review; an
    extraction failure is flagged, never auto-scored as wrong.
    """
    if conversation.terminal_state != "closed_normally":
        raise ValueError(
            f"cannot judge conversation in state {conversation.terminal_state!r}"
        )
    if conversation.vignette_id != vignette.id:
        raise ValueError(
            f"conversation is for {conversation.vignette_id!r}, vignette is {vignette.id!r}"
        )
    try:
        candidates = extract_candidates(conversation, kg)
    except NoDiagnosisExtracted as exc:
        pending = MatchVerdict(UNRESOLVED, detail=str(exc))
        return CaseJudgment(
            case_id=conversation.id,
            vignette_id=vignette.id,
            candidates=(),
            top1_verdict=pending,
            top2_verdict=pending,
            referral_specialty=None,
            referral_correct=None,
            judge_kind="pending",
            judge_id="",
            rationale="no diagnosis found in transcript",
            extraction_failed=True,
        )

    top1 = _best_verdict(candidates.diagnoses[0], vignette, kg)
    if top1.matched or len(candidates.diagnoses) < 2:
        top2 = top1
    else:
        second = _best_verdict(candidates.diagnoses[1], vignette, kg)
        if second.matched:
            top2 = second
        elif top1.unresolved or second.unresolved:
            # Either slot undecided means top-2 is undecided.
            top2 = top1 if top1.unresolved else second
        else:
            top2 = second if _RULE_PRECEDENCE[second.rule] < _RULE_PRECEDENCE[top1.rule] else top1

    referral_specialty = candidates.referral
    if referral_specialty is None and candidates.diagnoses:
        referral_specialty = specialty_map.get(
            normalize_condition(candidates.diagnoses[0])
        )
    referral_correct = resolve_referral(candidates, vignette, specialty_map)

    pending = (
        top1.unresolved or top2.unresolved or referral_correct is None
    )
    return CaseJudgment(
        case_id=conversation.id,
        vignette_id=vignette.id,
        candidates=candidates.diagnoses,
        top1_verdict=top1,
        top2_verdict=top2,
        referral_specialty=referral_specialty,
        referral_correct=referral_correct,
        judge_kind="pending" if pending else "automated",
        judge_id="" if pending else AUTOMATED_JUDGE_ID,
        rationale="; ".join(
            d for d in (top1.detail, top2.detail if top2 is not top1 else "") if d
        ),
    )


def apply_human_verdict(
    judgment: CaseJudgment,
    *,
    judge_id: str,
    top1_rule: str | None = None,
    top2_rule: str | None = None,
    referral_correct: bool | None = None,
    rationale: str = "",
    no_diagnosis: bool = False,
    timestamp: float | None = None,
) -> CaseJudgment:
    """Supersede a judgment with a human decision, keeping prior state in
    history.

    A reviewer either assigns rubric rules (M1..M5, N1..N3) or confirms that
    the transcript truly contains no diagnosis (``no_diagnosis``).  The top-2
    rule defaults to the top-1 rule when that rule is a match.
    """
    if not judge_id:
        raise InvalidRule("judge_id must be non-empty for a human verdict")
    snapshot = {
        "judge_kind": judgment.judge_kind,
        "judge_id": judgment.judge_id,
        "top1_rule": judgment.top1_verdict.rule,
        "top2_rule": judgment.top2_verdict.rule,
        "referral_correct": judgment.referral_correct,
        "rationale": judgment.rationale,
        "at": time.time() if timestamp is None else timestamp,
    }

    if no_diagnosis:
        verdict = MatchVerdict(NO_DIAGNOSIS, detail="reviewer confirmed no diagnosis given")
        return replace(
            judgment,
            top1_verdict=verdict,
            top2_verdict=verdict,
            referral_correct=False if referral_correct is None else referral_correct,
            judge_kind="human",
            judge_id=judge_id,
            rationale=rationale or verdict.detail,
            extraction_failed=True,
            history=judgment.history + (snapshot,),
        )

    if top1_rule is None:
        raise InvalidRule("top1_rule is required unless no_diagnosis is set")
    if top1_rule not in HUMAN_RULES:
        raise InvalidRule(f"top1_rule must be one of {HUMAN_RULES}, got {top1_rule!r}")
    top1 = MatchVerdict(top1_rule, detail=f"assigned by {judge_id}")
    if top2_rule is None:
        if top1.matched:
            top2 = top1
        elif not judgment.top2_verdict.unresolved:
            top2 = judgment.top2_verdict
        else:
            top2 = top1
    else:
        if top2_rule not in HUMAN_RULES:
            raise InvalidRule(f"top2_rule must be one of {HUMAN_RULES}, got {top2_rule!r}")
        top2 = MatchVerdict(top2_rule, detail=f"assigned by {judge_id}")
    if top1.matched and not top2.matched:
        raise InvalidRule("top-2 includes rank 1: top1 match forces top2 match")

    new_referral = judgment.referral_correct if referral_correct is None else referral_correct
    return replace(
        judgment,
        top1_verdict=top1,
        top2_verdict=top2,
        referral_correct=new_referral,
        judge_kind="human",
        judge_id=judge_id,
        rationale=rationale,
        extraction_failed=False,
        history=judgment.history + (snapshot,),
    )


# --- serialization --------------------------------------------------------


def judgment_to_record(j: CaseJudgment) -> dict:
    return {
        "kind": "verdict",
        "case_id": j.case_id,
        "vignette_id": j.vignette_id,
        "candidates": list(j.candidates),
        "top1_rule": j.top1_verdict.rule,
        "top1_detail": j.top1_verdict.detail,
        "top2_rule": j.top2_verdict.rule,
        "top2_detail": j.top2_verdict.detail,
        "referral_specialty": j.referral_specialty,
        "referral_correct": j.referral_correct,
        "judge_kind": j.judge_kind,
        "judge_id": j.judge_id,
        "rationale": j.rationale,
        "extraction_failed": j.extraction_failed,
        "history": list(j.history),
    }


def judgment_from_record(record: dict) -> CaseJudgment:
    try:
        return CaseJudgment(
            case_id=record["case_id"],
            vignette_id=record["vignette_id"],
            candidates=tuple(record.get("candidates", ())),
            top1_verdict=MatchVerdict(record["top1_rule"], record.get("top1_detail", "")),
            top2_verdict=MatchVerdict(record["top2_rule"], record.get("top2_detail", "")),
            referral_specialty=record.get("referral_specialty"),
            referral_correct=record.get("referral_correct"),
            judge_kind=record["judge_kind"],
            judge_id=record.get("judge_id", ""),
            rationale=record.get("rationale", ""),
            extraction_failed=record.get("extraction_failed", False),
            history=tuple(record.get("history", ())),
        )
    except KeyError as exc:
        raise ValueError(f"verdict record missing field {exc}") from exc
