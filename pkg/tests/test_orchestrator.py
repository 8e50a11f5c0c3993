from __future__ import annotations

import dataclasses

import pytest

from tests.shoulder_case import (
    AI_MESSAGES,
    FINAL_ASSESSMENT_TURN,
    FIRST_ASSESSMENT_TURN,
    PATIENT_MESSAGES,
    QUESTION_COUNT,
    SHOULDER_VIGNETTE,
    TURN_COUNT,
    make_sut,
)
from vgbench.gateway import (
    GatewayError,
    GatewayPolicy,
    ScriptedProvider,
    live_gateway,
)
from vgbench.orchestrator import (
    ASSESSMENT_MARKERS,
    ROLE_AI,
    ROLE_PATIENT,
    TERMINAL_STATES,
    Conversation,
    LoopPolicy,
    SystemUnderTest,
    Turn,
    count_questions,
    detect_close,
    run_conversation,
    turn_clock,
)


def conv_of(*role_texts: tuple[str, str]) -> Conversation:
    turns = tuple(
        Turn(i, role, text, float(i), "?" in text)
        for i, (role, text) in enumerate(role_texts)
    )
    return Conversation(id="c", vignette_id="v", run_id="r", turns=turns)


class _FailsFromCall:
    """Provider that permanently fails starting at call number ``n``."""

    def __init__(self, n: int, responses: list[str]):
        self.n = n
        self.responses = list(responses)
        self.calls = 0

    def complete(self, req, timeout_s):
        self.calls += 1
        if self.calls >= self.n:
            raise GatewayError(f"outage at call {self.calls}")
        return self.responses.pop(0)


def scripted_gateway(responses):
    return live_gateway(ScriptedProvider(list(responses)), GatewayPolicy(backoff_s=0.0))


# --- golden conversation ---------------------------------------------------


def test_golden_flow_shape(golden_conversation):
    conv = golden_conversation
    assert conv.terminal_state == "closed_normally"
    assert len(conv.turns) == TURN_COUNT
    assert [t.index for t in conv.turns] == list(range(TURN_COUNT))
    for t in conv.turns:
        assert t.role == (ROLE_PATIENT if t.index % 2 == 0 else ROLE_AI)
    assert [t.text for t in conv.turns[0::2]] == PATIENT_MESSAGES
    assert [t.text for t in conv.turns[1::2]] == AI_MESSAGES


def test_golden_flow_question_count(golden_conversation):
    assert golden_conversation.question_count == QUESTION_COUNT
    assert count_questions(golden_conversation) == QUESTION_COUNT
    flagged = [t.index for t in golden_conversation.turns if t.role == ROLE_AI and t.contains_question]
    assert len(flagged) == QUESTION_COUNT
    assert FINAL_ASSESSMENT_TURN not in flagged


def test_golden_flow_timestamps_are_deterministic(golden_conversation):
    assert [t.timestamp for t in golden_conversation.turns] == [
        float(i) for i in range(TURN_COUNT)
    ]


def test_golden_flow_assessment_turns(golden_conversation):
    turns = golden_conversation.turns
    lowered = turns[FIRST_ASSESSMENT_TURN].text.lower()
    assert any(m in lowered for m in ASSESSMENT_MARKERS)
    lowered = turns[FINAL_ASSESSMENT_TURN].text.lower()
    assert any(m in lowered for m in ASSESSMENT_MARKERS)


def test_golden_flow_lints_clean(golden_conversation):
    assert all(t.lint == () for t in golden_conversation.turns)


def test_golden_flow_ends_with_farewell_after_close(golden_conversation):
    turns = golden_conversation.turns
    assert turns[-1].role == ROLE_AI
    assert turns[-2].role == ROLE_PATIENT
    trimmed = dataclasses.replace(golden_conversation, turns=turns[:-1])
    assert detect_close(trimmed)


def test_golden_replay_is_deterministic(shoulder_cassettes):
    from tests.shoulder_case import replay_shoulder_conversation

    a = replay_shoulder_conversation(*shoulder_cassettes)
    b = replay_shoulder_conversation(*shoulder_cassettes)
    assert a == b


# --- close detection -------------------------------------------------------

ASSESSED = ("health_ai", "Your symptoms are consistent with a strained muscle.")


def test_close_requires_assessment_first():
    no_assessment = conv_of(
        ("patient_actor", "Hi"),
        ("health_ai", "What hurts?"),
        ("patient_actor", "Thanks, that's all."),
    )
    assert not detect_close(no_assessment)
    with_assessment = conv_of(
        ("patient_actor", "Hi"),
        ASSESSED,
        ("patient_actor", "Thanks, that's all."),
    )
    assert detect_close(with_assessment)


def test_close_rejects_questions_and_fresh_symptoms():
    asking = conv_of(
        ("patient_actor", "Hi"), ASSESSED, ("patient_actor", "Thanks, but what now?")
    )
    assert not detect_close(asking)
    symptomatic = conv_of(
        ("patient_actor", "Hi"), ASSESSED, ("patient_actor", "Thanks, but the pain is worse.")
    )
    assert not detect_close(symptomatic)


def test_close_needs_patient_last_and_some_turns():
    assert not detect_close(conv_of())
    ai_last = conv_of(("patient_actor", "Thanks!"), ASSESSED)
    assert not detect_close(ai_last)


def test_close_accepts_goodbye_without_thanks():
    conv = conv_of(("patient_actor", "Hi"), ASSESSED, ("patient_actor", "Goodbye."))
    assert detect_close(conv)


# --- question counting -----------------------------------------------------


def test_multiple_question_marks_count_once():
    conv = conv_of(
        ("patient_actor", "Hi"),
        ("health_ai", "Where? When? How bad?"),
        ("patient_actor", "Shoulder, Monday, very."),
        ("health_ai", "Noted."),
    )
    assert count_questions(conv) == 1


def test_patient_questions_are_not_counted():
    conv = conv_of(
        ("patient_actor", "Can you help?"),
        ("health_ai", "Yes."),
    )
    assert count_questions(conv) == 0


# --- loop control ----------------------------------------------------------


def test_max_turns_even_cap_ends_on_ai_turn():
    actor = scripted_gateway(["Hi", "Still here", "More answers"])
    sut = make_sut(scripted_gateway(["What hurts?", "And since when?"]))
    conv = run_conversation(
        SHOULDER_VIGNETTE, sut, actor, LoopPolicy(max_turns=4)
    )
    assert conv.terminal_state == "max_turns_reached"
    assert len(conv.turns) == 4
    assert conv.turns[-1].role == ROLE_AI


def test_max_turns_odd_cap_ends_on_patient_turn():
    actor = scripted_gateway(["Hi", "Still here"])
    sut = make_sut(scripted_gateway(["What hurts?"]))
    conv = run_conversation(SHOULDER_VIGNETTE, sut, actor, LoopPolicy(max_turns=3))
    assert conv.terminal_state == "max_turns_reached"
    assert len(conv.turns) == 3
    assert conv.turns[-1].role == ROLE_PATIENT


def test_loop_policy_rejects_tiny_budget():
    with pytest.raises(ValueError):
        LoopPolicy(max_turns=1)


def test_shared_gateway_outage_on_third_call_keeps_two_turns():
    provider = _FailsFromCall(3, ["Hi August", "What brings you in?"])
    shared = live_gateway(provider, GatewayPolicy(retries=1, backoff_s=0.0))
    conv = run_conversation(SHOULDER_VIGNETTE, make_sut(shared), shared)
    assert conv.terminal_state == "gateway_failure"
    assert len(conv.turns) == 2
    assert [t.role for t in conv.turns] == [ROLE_PATIENT, ROLE_AI]
    assert provider.calls == 4  # third logical call plus one retry


def test_sut_outage_mid_conversation_keeps_partial_transcript():
    actor = scripted_gateway(["Hi", "It aches a bit"])
    sut_provider = _FailsFromCall(2, ["Tell me more?"])
    sut = make_sut(live_gateway(sut_provider, GatewayPolicy(retries=1, backoff_s=0.0)))
    conv = run_conversation(SHOULDER_VIGNETTE, sut, actor)
    assert conv.terminal_state == "gateway_failure"
    assert len(conv.turns) == 3


def test_farewell_outage_still_records_failure():
    actor = scripted_gateway(["Hi", "Thanks, goodbye."])
    sut_provider = _FailsFromCall(2, ["This suggests a mild strain of the shoulder."])
    sut = make_sut(live_gateway(sut_provider, GatewayPolicy(retries=1, backoff_s=0.0)))
    conv = run_conversation(SHOULDER_VIGNETTE, sut, actor)
    assert conv.terminal_state == "gateway_failure"
    assert len(conv.turns) == 3
    assert conv.turns[-1].text == "Thanks, goodbye."


def test_terminal_states_vocabulary():
    assert TERMINAL_STATES == ("closed_normally", "max_turns_reached", "gateway_failure")


# --- wiring ----------------------------------------------------------------


def test_sut_reply_role_mapping_and_tag():
    provider = ScriptedProvider(["  Does it hurt at night?  "])
    sut = SystemUnderTest(
        name="august", version="1.0", model="sut-model",
        gateway=live_gateway(provider, GatewayPolicy(backoff_s=0.0)),
    )
    conv = conv_of(
        ("patient_actor", "Hi"),
        ("health_ai", "Hello."),
        ("patient_actor", "My shoulder aches."),
    )
    assert sut.reply(conv) == "Does it hurt at night?"
    req = provider.requests_seen[0]
    assert req.model == "sut-model"
    assert req.tag == "c:sut:3"
    assert [m.role for m in req.messages] == ["system", "user", "assistant", "user"]


def test_conversation_id_defaults_to_vignette_id():
    actor = scripted_gateway(["Hi", "ok"])
    sut = make_sut(scripted_gateway(["And?"]))
    conv = run_conversation(SHOULDER_VIGNETTE, sut, actor, LoopPolicy(max_turns=3))
    assert conv.id == SHOULDER_VIGNETTE.id
    assert conv.vignette_id == SHOULDER_VIGNETTE.id
    assert conv.run_id == "adhoc"

    named = run_conversation(
        SHOULDER_VIGNETTE,
        make_sut(scripted_gateway(["And?"])),
        scripted_gateway(["Hi", "ok"]),
        LoopPolicy(max_turns=3),
        run_id="run-7",
        conversation_id="case-42",
    )
    assert named.id == "case-42"
    assert named.run_id == "run-7"


def test_custom_clock_sets_timestamps():
    actor = scripted_gateway(["Hi", "ok"])
    sut = make_sut(scripted_gateway(["And?"]))
    conv = run_conversation(
        SHOULDER_VIGNETTE, sut, actor, LoopPolicy(max_turns=3),
        clock=lambda index: 100.0 + index,
    )
    assert [t.timestamp for t in conv.turns] == [100.0, 101.0, 102.0]


def test_turn_clock_depends_only_on_index():
    assert turn_clock("a")(5) == turn_clock("b")(5) == 5.0


def test_lint_violations_attach_to_patient_turns():
    actor = scripted_gateway(["My tendinitis is back.", "ok"])
    sut = make_sut(scripted_gateway(["And?"]))
    conv = run_conversation(SHOULDER_VIGNETTE, sut, actor, LoopPolicy(max_turns=3))
    assert conv.turns[0].lint != ()
    assert conv.turns[0].lint[0].rule == "R1"
    assert conv.turns[1].lint == ()
