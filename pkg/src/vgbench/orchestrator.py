"""Conversation orchestrator: the turn loop between actor and system under test.

Turns alternate strictly, patient first.  The loop ends when the patient
closes after receiving an assessment (the system under test then gets one
farewell turn), when the turn budget runs out, or when a gateway failure
interrupts the exchange.  Partial transcripts are always retained.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable

from . import actor as actor_mod
from .actor import (
    LintViolation,
    PatientPersona,
    PromptSpec,
    build_persona,
    compose_actor_prompt,
    lint_actor_message,
    mentions_symptom,
    next_patient_message,
)
from .corpus import ClinicalVignette
from .gateway import ChatMessage, ChatRequest, GatewayError, ModelGateway

if TYPE_CHECKING:  # pragma: no cover
    from .store import RunStore

logger = logging.getLogger(__name__)

ROLE_PATIENT = "patient_actor"
ROLE_AI = "health_ai"

TERMINAL_STATES = ("closed_normally", "max_turns_reached", "gateway_failure")

DEFAULT_MAX_TURNS = 60

# An AI turn counts as assessment-bearing when it commits to a diagnostic
# impression rather than just asking another question.
ASSESSMENT_MARKERS: tuple[str, ...] = (
    "consistent with",
    "could be due to",
    "conditions like",
    "it's likely",
    "it is likely",
    "most likely",
    "seems likely",
    "possibility of",
    "aligns with",
    "suggests",
    "suggestive of",
    "diagnosis",
    "may be caused by",
)

_GRATITUDE_TERMS: tuple[str, ...] = (
    "thank", "thanks", "appreciate", "goodbye", "bye", "take care", "that's all",
)


class OrchestratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class Turn:
    index: int
    role: str
    text: str
    timestamp: float
    contains_question: bool
    lint: tuple[LintViolation, ...] = ()


@dataclass(frozen=True)
class Conversation:
    id: str
    vignette_id: str
    run_id: str
    turns: tuple[Turn, ...] = ()
    terminal_state: str | None = None

    @property
    def question_count(self) -> int:
        return count_questions(self)


@dataclass(frozen=True)
class SystemUnderTest:
    """The assistant being benchmarked, with its own gateway."""

    name: str
    version: str
    model: str
    gateway: ModelGateway
    system_prompt: str = (
        "You are a careful health assistant talking with a patient. Ask one "
        "question at a time to narrow down the cause, then share your "
        "assessment and recommend an appropriate specialist."
    )

    def reply(self, conversation: Conversation) -> str:
        messages: list[ChatMessage] = [ChatMessage("system", self.system_prompt)]
        for turn in conversation.turns:
            role = "user" if turn.role == ROLE_PATIENT else "assistant"
            messages.append(ChatMessage(role, turn.text))
        req = ChatRequest(
            model=self.model,
            messages=tuple(messages),
            tag=f"{conversation.id}:sut:{len(conversation.turns)}",
        )
        return self.gateway.chat(req).text.strip()


@dataclass(frozen=True)
class LoopPolicy:
    max_turns: int = DEFAULT_MAX_TURNS
    actor_model: str = "patient-actor"
    actor_temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.max_turns < 2:
            raise ValueError(f"max_turns must be at least 2, got {self.max_turns}")


def turn_clock(conversation_id: str) -> Callable[[int], float]:
    """Deterministic per-turn timestamps so replayed transcripts are
    byte-identical: the timestamp is a function of the turn index alone."""
    del conversation_id
    return lambda index: float(index)


def _has_question(text: str) -> bool:
    return "?" in text


def _is_closing_message(text: str) -> bool:
    lowered = text.lower()
    if _has_question(text) or mentions_symptom(text):
        return False
    return any(term in lowered for term in _GRATITUDE_TERMS)


def _assessment_seen(turns: tuple[Turn, ...]) -> bool:
    for turn in turns:
        if turn.role != ROLE_AI:
            continue
        lowered = turn.text.lower()
        if any(marker in lowered for marker in ASSESSMENT_MARKERS):
            return True
    return False


def detect_close(conversation: Conversation) -> bool:
    """True when the latest turn is a patient wrap-up (gratitude or farewell,
    no fresh symptoms, no question) and an assessment was already given."""
    turns = conversation.turns
    if not turns:
        return False
    last = turns[-1]
    if last.role != ROLE_PATIENT:
        return False
    if not _is_closing_message(last.text):
        return False
    return _assessment_seen(turns[:-1])


def count_questions(conversation: Conversation) -> int:
    """Number of AI turns that ask at least one question.

    A turn with several question marks still counts once.
    """
    return sum(
        1 for t in conversation.turns if t.role == ROLE_AI and t.contains_question
    )


def run_conversation(
    vignette: ClinicalVignette,
    sut: SystemUnderTest,
    actor_gateway: ModelGateway,
    policy: LoopPolicy | None = None,
    *,
    run_id: str = "adhoc",
    conversation_id: str | None = None,
    lexicon: frozenset[str] | None = None,
    store: "RunStore | None" = None,
    clock: Callable[[int], float] | None = None,
) -> Conversation:
    """Run one full patient/assistant conversation for a vignette.

    Every completed turn is kept even when the loop ends early; a gateway
    failure on either side yields terminal state "gateway_failure" with the
    partial transcript intact.  When ``store`` is given, each turn and the
    terminal record are appended as they happen.
    """
    policy = policy or LoopPolicy()
    cid = conversation_id or vignette.id
    clock = clock or turn_clock(cid)
    persona = build_persona(vignette)
    prompt = compose_actor_prompt(persona, vignette)
    lex = lexicon if lexicon is not None else actor_mod.load_jargon_lexicon()

    conversation = Conversation(id=cid, vignette_id=vignette.id, run_id=run_id)
    terminal = "max_turns_reached"

    def append(role: str, text: str, lint: tuple[LintViolation, ...] = ()) -> None:
        nonlocal conversation
        index = len(conversation.turns)
        turn = Turn(
            index=index,
            role=role,
            text=text,
            timestamp=clock(index),
            contains_question=_has_question(text),
            lint=lint,
        )
        conversation = replace(conversation, turns=conversation.turns + (turn,))
        if store is not None:
            store.append_turn(run_id, cid, turn)

    while len(conversation.turns) < policy.max_turns:
        # Patient's turn.
        try:
            text = next_patient_message(
                persona,
                conversation,
                actor_gateway,
                prompt=prompt,
                model=policy.actor_model,
                temperature=policy.actor_temperature,
            )
        except GatewayError as exc:
            logger.warning("actor gateway failed in %s: %s", cid, exc)
            terminal = "gateway_failure"
            break
        lint = lint_actor_message(text, persona, conversation, lexicon=lex)
        append(ROLE_PATIENT, text, lint)
        if len(conversation.turns) >= policy.max_turns:
            terminal = "max_turns_reached"
            break
        if detect_close(conversation):
            # One farewell turn for the assistant, then the exchange is over.
            try:
                reply = sut.reply(conversation)
            except GatewayError as exc:
                logger.warning("sut gateway failed on farewell in %s: %s", cid, exc)
                terminal = "gateway_failure"
                break
            append(ROLE_AI, reply)
            terminal = "closed_normally"
            break

        # Assistant's turn.
        try:
            reply = sut.reply(conversation)
        except GatewayError as exc:
            logger.warning("sut gateway failed in %s: %s", cid, exc)
            terminal = "gateway_failure"
            break
        append(ROLE_AI, reply)

    conversation = replace(conversation, terminal_state=terminal)
    if store is not None:
        store.append_terminal(run_id, cid, terminal, count_questions(conversation))
    return conversation
