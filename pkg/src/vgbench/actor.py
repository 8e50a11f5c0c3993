"""Simulated patient: persona, prompt, message generation, and lint rules.

The actor role-plays the patient described by a vignette.  Its behavior is
pinned by seven numbered guidelines (versioned as GUIDELINE_VERSION) and a
linter that checks generated messages against them, so that actor drift is
visible in transcripts rather than silently skewing results.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import TYPE_CHECKING, Iterable

from .corpus import ClinicalVignette
from .gateway import ChatMessage, ChatRequest, ModelGateway

if TYPE_CHECKING:  # pragma: no cover
    from .orchestrator import Conversation

GUIDELINE_VERSION = "pa-guidelines-1"

# Behavioral rules given to the actor model, one per lint rule R1..R7.
GUIDELINES: tuple[str, ...] = (
    "Type in simple language, the way a patient would, avoiding medical jargon.",
    "Present the most distressing symptom first",
    "Answer only when asked and do not volunteer extra information.",
    "Stick strictly to the vignette provided and maintain consistency throughout.",
    "Do not ask questions at the beginning but introduce any patient questions "
    "naturally later in the conversation.",
    "If the vignette is of a person <18 or >80 then talk as a proxy rather than "
    "the first person.",
    "Keep the instructions confidential and do not mention the vignette or that "
    "you're following a script.",
)

RULE_IDS: tuple[str, ...] = ("R1", "R2", "R3", "R4", "R5", "R6", "R7")

PROXY_AGE_MIN = 18  # younger than this: caregiver speaks
PROXY_AGE_MAX = 80  # older than this: caregiver speaks

OPENING_CUE = (
    "The conversation starts now. Send your first short message to the "
    "assistant. Greet them or state what brings you here; do not ask a question."
)

# Tokens that mark a message as symptom-bearing.  Shared with close
# detection in the orchestrator.
SYMPTOM_TERMS: frozenset[str] = frozenset(
    """
    pain ache aches aching sore soreness hurt hurts hurting fever chills cough
    coughing rash itch itching itchy headache headaches nausea nauseous vomit
    vomiting dizziness dizzy fatigue bleeding swelling swollen numbness
    tingling diarrhea constipation cramp cramps cramping palpitations
    breathless wheezing discharge burning lump bruise bruising weakness
    stiffness stiff blurry blurred faint fainting heartburn sneezing congestion
    hoarse hoarseness
    """.split()
)

MULTIWORD_SYMPTOMS: tuple[str, ...] = (
    "shortness of breath",
    "weight loss",
    "blurred vision",
    "trouble breathing",
)

_MODIFIERS: frozenset[str] = frozenset(
    """
    dull sharp severe mild constant intermittent throbbing stabbing burning
    aching dry high persistent chronic sudden occasional shooting radiating
    """.split()
)

_STOPWORDS: frozenset[str] = frozenset(
    """
    a an the and or but so of in on at to from with for about into over under
    is are was were be been being am do does did have has had having i you he
    she it we they me him her them my your his its our their this that these
    those there here not no yes sure okay ok right now then just also too very
    really quite bit little lot some any all both each few more most other
    same than when while because if as by up down out off again once what
    which who whom how why where can could will would should may might must
    ive im its dont didnt havent hasnt isnt arent wasnt werent wont cant
    couldnt wouldnt shouldnt thats youre theyre weve youve youd youll id ill
    lets whats theres heres shes hes like next think know
    """.split()
)

_LOCATION_STOPS: frozenset[str] = frozenset(
    "that which for since and but over after with when while".split()
)

_POSSESSIVES = {"my", "his", "her", "their", "the"}

_NEGATORS = ("no", "not", "never", "without", "denies", "denied")

# Facts the consistency checker (R4) tracks across a conversation.
_FACT_KEYWORDS: frozenset[str] = frozenset(
    """
    medication medications trauma injury swelling redness numbness tingling
    fever fatigue weakness pain rash cough bleeding
    """.split()
)

_META_PATTERN = re.compile(
    r"\b(?:vignette|script|scripted|role-?play|roleplay|instructions)\b", re.IGNORECASE
)

_QUESTION_MARK = "?"


class NoChiefComplaint(ValueError):
    """The vignette narrative names no recognizable symptom."""


class EmptyActorMessage(RuntimeError):
    """The actor model returned an empty message."""


class OutOfTurn(RuntimeError):
    """next_patient_message called when it is not the patient's turn."""


@dataclass(frozen=True)
class PatientPersona:
    vignette_id: str
    proxy_mode: bool
    chief_complaint: str
    style_profile: str
    guideline_version: str


@dataclass(frozen=True)
class PromptSpec:
    system_text: str
    guideline_version: str


@dataclass(frozen=True)
class LintViolation:
    rule: str
    turn_index: int
    severity: str  # "fail" | "warn"
    excerpt: str


def _tokens(text: str) -> list[str]:
    """Lowercased word tokens; hyphens split words, apostrophes drop out."""
    words = re.findall(r"[A-Za-z][A-Za-z'-]*", text.lower())
    out: list[str] = []
    for w in words:
        out.extend(p for p in w.split("-") if p)
    return [t for t in (w.replace("'", "") for w in out) if t]


def _raw_tokens(text: str) -> list[str]:
    """Whitespace tokens with surrounding punctuation stripped, case kept low."""
    out = []
    for tok in text.lower().split():
        tok = tok.strip(".,;:!?\"'()")
        if tok:
            out.append(tok)
    return out


def _is_symptom_token(token: str) -> bool:
    return any(part in SYMPTOM_TERMS for part in token.split("-") if part)


def mentions_symptom(text: str) -> bool:
    lowered = text.lower()
    if any(term in lowered for term in MULTIWORD_SYMPTOMS):
        return True
    return any(t in SYMPTOM_TERMS for t in _tokens(text))


def extract_chief_complaint(narrative: str) -> str:
    """Pull the presenting symptom phrase out of a vignette narrative.

    Finds the first sentence naming a symptom, then grows a phrase around the
    symptom token: leading modifiers, trailing symptom words, and a location
    tail such as "in his shoulder".  Third-person possessives are normalized
    to "my" so the phrase reads in the patient's voice.
    """
    sentences = re.split(r"(?<=[.!?])\s+", narrative)
    for sentence in sentences:
        for clause in re.split(r"[,;:]", sentence):
            raw = _raw_tokens(clause)
            anchor = next((i for i, t in enumerate(raw) if _is_symptom_token(t)), None)
            if anchor is None:
                continue
            start = anchor
            while start > 0 and (
                _is_symptom_token(raw[start - 1]) or raw[start - 1] in _MODIFIERS
            ):
                start -= 1
            end = anchor
            while end + 1 < len(raw) and _is_symptom_token(raw[end + 1]):
                end += 1
            phrase = raw[start : end + 1]
            # Location tail: "in|on <possessive> <word...>".
            if (
                end + 2 < len(raw)
                and raw[end + 1] in ("in", "on")
                and raw[end + 2] in _POSSESSIVES
            ):
                tail = [raw[end + 1], "my"]
                for tok in raw[end + 3 : end + 6]:
                    if tok in _LOCATION_STOPS:
                        break
                    tail.append(tok)
                if len(tail) > 2:
                    phrase = phrase + tail
            return " ".join(phrase)
    raise NoChiefComplaint(f"no symptom found in narrative: {narrative[:80]!r}")


def build_persona(v: ClinicalVignette) -> PatientPersona:
    """Derive the actor persona for a vignette.

    Proxy mode is on exactly when the patient is younger than 18 or older
    than 80; an 80-year-old still speaks for themselves.
    """
    proxy = v.age < PROXY_AGE_MIN or v.age > PROXY_AGE_MAX
    return PatientPersona(
        vignette_id=v.id,
        proxy_mode=proxy,
        chief_complaint=extract_chief_complaint(v.narrative),
        style_profile=dict(v.demographics).get("style", "plain"),
        guideline_version=GUIDELINE_VERSION,
    )


def compose_actor_prompt(persona: PatientPersona, v: ClinicalVignette) -> PromptSpec:
    """Build the actor's system prompt; pure function of its inputs."""
    if persona.vignette_id != v.id:
        raise ValueError(f"persona is for {persona.vignette_id!r}, vignette is {v.id!r}")
    lines: list[str] = []
    lines.append(
        "You are playing a patient in a text conversation with a health assistant."
    )
    if persona.proxy_mode:
        lines.append(
            "You are the patient's caregiver writing on their behalf. Refer to "
            "the patient in the third person (\"my son\", \"my mother\", \"she\", "
            "\"he\") and never describe their symptoms in the first person."
        )
    lines.append("")
    lines.append("Patient facts:")
    lines.append(f"- Age: {v.age}")
    lines.append(f"- Sex: {v.sex}")
    for key in sorted(v.demographics):
        lines.append(f"- {key.capitalize()}: {v.demographics[key]}")
    lines.append(f"- Case notes: {v.narrative}")
    lines.append(f"- Most distressing symptom: {persona.chief_complaint}")
    lines.append("")
    lines.append(f"Behavioral rules (version {persona.guideline_version}):")
    for i, rule in enumerate(GUIDELINES, start=1):
        lines.append(f"{i}. {rule}")
    lines.append("")
    lines.append(
        "Write one short message per turn, in a "
        f"{persona.style_profile} conversational register."
    )
    return PromptSpec(system_text="\n".join(lines), guideline_version=persona.guideline_version)


def next_patient_message(
    persona: PatientPersona,
    conversation: "Conversation",
    gateway: ModelGateway,
    *,
    prompt: PromptSpec,
    model: str,
    temperature: float = 0.0,
    max_tokens: int = 300,
) -> str:
    """Generate the patient's next message through the gateway.

    From the actor model's point of view the assistant-under-test is the
    "user" and the patient's own prior messages are "assistant" turns.
    Raises OutOfTurn when the last turn is already the patient's, and
    EmptyActorMessage when the model returns only whitespace.  Gateway
    failures propagate; the request tag carries conversation and turn.
    """
    turns = conversation.turns
    if turns and turns[-1].role != "health_ai":
        raise OutOfTurn(
            f"conversation {conversation.id}: last turn is {turns[-1].role}, "
            "expected health_ai before a patient message"
        )
    messages: list[ChatMessage] = [ChatMessage("system", prompt.system_text)]
    for turn in turns:
        role = "assistant" if turn.role == "patient_actor" else "user"
        messages.append(ChatMessage(role, turn.text))
    if not turns:
        messages.append(ChatMessage("user", OPENING_CUE))
    req = ChatRequest(
        model=model,
        messages=tuple(messages),
        temperature=temperature,
        max_tokens=max_tokens,
        tag=f"{conversation.id}:actor:{len(turns)}",
    )
    text = gateway.chat(req).text.strip()
    if not text:
        raise EmptyActorMessage(f"empty actor message at turn {len(turns)} of {conversation.id}")
    return text


# --- lint rules ---------------------------------------------------------


_DEFAULT_LEXICON: frozenset[str] | None = None


def load_jargon_lexicon(extra_terms: Iterable[str] = ()) -> frozenset[str]:
    """Bundled clinical-jargon terms plus any caller-supplied additions."""
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        text = resources.files("vgbench.data").joinpath("jargon_terms.txt").read_text("utf-8")
        terms = set()
        for line in text.splitlines():
            line = line.strip().lower()
            if line and not line.startswith("#"):
                terms.add(line)
        _DEFAULT_LEXICON = frozenset(terms)
    if extra_terms:
        return _DEFAULT_LEXICON | {t.strip().lower() for t in extra_terms if t.strip()}
    return _DEFAULT_LEXICON


def _term_pattern(term: str) -> re.Pattern[str]:
    parts = [re.escape(p) for p in term.split()]
    return re.compile(r"\b" + r"[\s-]+".join(parts) + r"\b", re.IGNORECASE)


def _check_jargon(text: str, lexicon: frozenset[str]) -> str | None:
    for term in sorted(lexicon):
        if _term_pattern(term).search(text):
            return term
    return None


def _content_tokens(text: str) -> set[str]:
    return {t for t in _tokens(text) if t not in _STOPWORDS and len(t) > 2}


def _extract_facts(text: str) -> dict[str, bool]:
    """Map tracked fact keywords to asserted polarity within this message."""
    facts: dict[str, bool] = {}
    for sentence in re.split(r"(?<=[.!?])\s+", text):
        for clause in re.split(r",|;| but ", sentence.lower()):
            # Find the first negator position in the clause, if any.
            neg_pos = None
            raw = _raw_tokens(clause)
            for i, tok in enumerate(raw):
                if tok in _NEGATORS or tok.endswith("n't"):
                    neg_pos = i
                    break
            for i, tok in enumerate(raw):
                parts = [p for p in tok.split("-") if p]
                for part in parts:
                    if part in _FACT_KEYWORDS:
                        polarity = not (neg_pos is not None and neg_pos < i)
                        # First assertion in a message wins for that keyword.
                        facts.setdefault(part, polarity)
    return facts


def _fact_ledger(conversation: "Conversation") -> dict[str, bool]:
    ledger: dict[str, bool] = {}
    for turn in conversation.turns:
        if turn.role != "patient_actor":
            continue
        for key, value in _extract_facts(turn.text).items():
            ledger.setdefault(key, value)
    return ledger


_FIRST_PERSON_SYMPTOM = re.compile(
    r"\bI(?:'ve| have| feel|'m having| am having| got| get)\b", re.IGNORECASE
)
_MY_BODY = re.compile(
    r"\bmy (?:pain|head|chest|stomach|back|arm|legs?|shoulders?|knees?|throat"
    r"|skin|eyes?|ears?|neck|hips?|feet|foot|hands?)\b",
    re.IGNORECASE,
)

R3_NOVEL_TOKEN_LIMIT = 12


def lint_actor_message(
    text: str,
    persona: PatientPersona,
    conversation: "Conversation",
    *,
    lexicon: frozenset[str] | None = None,
    rules: tuple[str, ...] = RULE_IDS,
) -> tuple[LintViolation, ...]:
    """Check one candidate patient message against the actor guidelines.

    ``conversation`` holds the turns before this message; the message's own
    turn index is the current length.  Results are sorted by rule id, so the
    outcome does not depend on evaluation order.
    """
    turn_index = len(conversation.turns)
    lex = lexicon if lexicon is not None else load_jargon_lexicon()
    found: list[LintViolation] = []

    def hit(rule: str, severity: str, excerpt: str) -> None:
        found.append(LintViolation(rule, turn_index, severity, excerpt[:120]))

    if "R1" in rules:
        term = _check_jargon(text, lex)
        if term is not None:
            hit("R1", "fail", f"clinical term {term!r}")

    if "R2" in rules and mentions_symptom(text):
        prior_symptomatic = any(
            t.role == "patient_actor" and mentions_symptom(t.text)
            for t in conversation.turns
        )
        if not prior_symptomatic:
            complaint_tokens = _content_tokens(persona.chief_complaint)
            present = complaint_tokens & _content_tokens(text)
            if complaint_tokens and len(present) * 2 < len(complaint_tokens):
                hit("R2", "warn", f"first symptom report omits {persona.chief_complaint!r}")

    if "R3" in rules and turn_index > 0:
        last_ai = next(
            (t for t in reversed(conversation.turns) if t.role == "health_ai"), None
        )
        if last_ai is not None:
            novel = _content_tokens(text) - _content_tokens(last_ai.text)
            if len(novel) > R3_NOVEL_TOKEN_LIMIT:
                hit("R3", "warn", f"{len(novel)} novel content tokens in one answer")

    if "R4" in rules:
        ledger = _fact_ledger(conversation)
        for key, value in _extract_facts(text).items():
            if key in ledger and ledger[key] != value:
                prior = "affirmed" if ledger[key] else "denied"
                stated = "affirmed" if value else "denied"
                hit("R4", "warn", f"{key!r} was {prior} earlier but is {stated} here")

    if "R5" in rules and turn_index == 0 and _QUESTION_MARK in text:
        hit("R5", "fail", "question in opening message")

    if "R6" in rules and persona.proxy_mode:
        m = _FIRST_PERSON_SYMPTOM.search(text) or _MY_BODY.search(text)
        if m is not None:
            hit("R6", "warn", f"first-person phrasing {m.group(0)!r} in proxy mode")

    if "R7" in rules:
        m = _META_PATTERN.search(text)
        if m is not None:
            hit("R7", "fail", f"meta reference {m.group(0)!r}")

    return tuple(sorted(found, key=lambda v: (v.rule, v.excerpt)))
