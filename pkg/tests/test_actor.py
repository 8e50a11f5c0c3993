from __future__ import annotations

import dataclasses

import pytest

from tests.shoulder_case import PATIENT_MESSAGES, SHOULDER_VIGNETTE
from vgbench.actor import (
    GUIDELINE_VERSION,
    GUIDELINES,
    OPENING_CUE,
    R3_NOVEL_TOKEN_LIMIT,
    RULE_IDS,
    EmptyActorMessage,
    NoChiefComplaint,
    OutOfTurn,
    build_persona,
    compose_actor_prompt,
    extract_chief_complaint,
    lint_actor_message,
    load_jargon_lexicon,
    mentions_symptom,
    next_patient_message,
)
from vgbench.gateway import GatewayPolicy, ScriptedProvider, live_gateway
from vgbench.orchestrator import Conversation, Turn

EXPECTED_GUIDELINES = (
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


def make_conv(*role_texts: tuple[str, str]) -> Conversation:
    turns = tuple(
        Turn(
            index=i,
            role=role,
            text=text,
            timestamp=float(i),
            contains_question="?" in text,
        )
        for i, (role, text) in enumerate(role_texts)
    )
    return Conversation(id="conv-1", vignette_id="ortho-001", run_id="t", turns=turns)


@pytest.fixture(scope="module")
def persona():
    return build_persona(SHOULDER_VIGNETTE)


def test_guideline_texts_are_frozen():
    assert GUIDELINES == EXPECTED_GUIDELINES
    assert len(GUIDELINES) == 7
    assert GUIDELINE_VERSION == "pa-guidelines-1"
    assert RULE_IDS == ("R1", "R2", "R3", "R4", "R5", "R6", "R7")


@pytest.mark.parametrize(
    "age, proxy",
    [(0, True), (5, True), (17, True), (18, False), (45, False),
     (80, False), (81, True), (120, True)],
)
def test_proxy_mode_age_boundaries(age, proxy):
    v = dataclasses.replace(SHOULDER_VIGNETTE, age=age)
    assert build_persona(v).proxy_mode is proxy


def test_chief_complaint_from_golden_narrative():
    assert (
        extract_chief_complaint(SHOULDER_VIGNETTE.narrative)
        == "dull-aching pain in my shoulder"
    )


def test_chief_complaint_extends_over_modifiers():
    text = "She reports severe throbbing headache since Monday."
    assert extract_chief_complaint(text) == "severe throbbing headache"


def test_chief_complaint_location_tail_stops_at_clause_words():
    text = "He noticed swelling in his knee that worsens at night."
    assert extract_chief_complaint(text) == "swelling in my knee"


def test_chief_complaint_requires_a_symptom():
    with pytest.raises(NoChiefComplaint):
        extract_chief_complaint("A 40 year old male attends a routine checkup.")


def test_persona_fields(persona):
    assert persona.vignette_id == "ortho-001"
    assert persona.proxy_mode is False
    assert persona.chief_complaint == "dull-aching pain in my shoulder"
    assert persona.style_profile == "plain"
    assert persona.guideline_version == GUIDELINE_VERSION


def test_persona_style_comes_from_demographics():
    v = dataclasses.replace(SHOULDER_VIGNETTE, demographics={"style": "terse"})
    assert build_persona(v).style_profile == "terse"


def test_prompt_is_deterministic_and_numbered(persona):
    a = compose_actor_prompt(persona, SHOULDER_VIGNETTE)
    b = compose_actor_prompt(persona, SHOULDER_VIGNETTE)
    assert a == b
    assert a.guideline_version == GUIDELINE_VERSION
    for i, rule in enumerate(GUIDELINES, start=1):
        assert a.system_text.count(f"{i}. {rule}") == 1
    assert "- Age: 23" in a.system_text
    assert "dull-aching pain in my shoulder" in a.system_text
    assert "caregiver" not in a.system_text


def test_prompt_proxy_paragraph_only_in_proxy_mode():
    v = dataclasses.replace(SHOULDER_VIGNETTE, age=83)
    p = build_persona(v)
    spec = compose_actor_prompt(p, v)
    assert "caregiver" in spec.system_text


def test_prompt_lists_demographics_sorted():
    v = dataclasses.replace(
        SHOULDER_VIGNETTE,
        demographics={"occupation": "tennis player", "allergies": "none"},
    )
    text = compose_actor_prompt(build_persona(v), v).system_text
    assert text.index("- Allergies: none") < text.index("- Occupation: tennis player")


def test_prompt_rejects_mismatched_vignette(persona):
    other = dataclasses.replace(SHOULDER_VIGNETTE, id="other-id")
    with pytest.raises(ValueError):
        compose_actor_prompt(persona, other)


def test_next_message_role_mapping_and_tag(persona):
    provider = ScriptedProvider(["Sounds good."])
    gw = live_gateway(provider, GatewayPolicy(backoff_s=0.0))
    conv = make_conv(
        ("patient_actor", "Hi August"),
        ("health_ai", "How can I help?"),
    )
    prompt = compose_actor_prompt(persona, SHOULDER_VIGNETTE)
    text = next_patient_message(
        persona, conv, gw, prompt=prompt, model="patient-actor"
    )
    assert text == "Sounds good."
    req = provider.requests_seen[0]
    assert req.model == "patient-actor"
    assert req.tag == "conv-1:actor:2"
    roles = [(m.role, m.text) for m in req.messages]
    assert roles == [
        ("system", prompt.system_text),
        ("assistant", "Hi August"),
        ("user", "How can I help?"),
    ]


def test_next_message_opening_cue_on_empty_conversation(persona):
    provider = ScriptedProvider(["Hi August"])
    gw = live_gateway(provider, GatewayPolicy(backoff_s=0.0))
    prompt = compose_actor_prompt(persona, SHOULDER_VIGNETTE)
    next_patient_message(persona, make_conv(), gw, prompt=prompt, model="m")
    req = provider.requests_seen[0]
    assert req.messages[-1].role == "user"
    assert req.messages[-1].text == OPENING_CUE


def test_next_message_out_of_turn(persona):
    gw = live_gateway(ScriptedProvider(["x"]), GatewayPolicy(backoff_s=0.0))
    prompt = compose_actor_prompt(persona, SHOULDER_VIGNETTE)
    conv = make_conv(("patient_actor", "Hi"))
    with pytest.raises(OutOfTurn):
        next_patient_message(persona, conv, gw, prompt=prompt, model="m")


def test_next_message_rejects_blank_model_output(persona):
    gw = live_gateway(ScriptedProvider(["   \n"]), GatewayPolicy(backoff_s=0.0))
    prompt = compose_actor_prompt(persona, SHOULDER_VIGNETTE)
    with pytest.raises(EmptyActorMessage):
        next_patient_message(persona, make_conv(), gw, prompt=prompt, model="m")


def test_next_message_strips_whitespace(persona):
    gw = live_gateway(ScriptedProvider(["  easy does it  "]), GatewayPolicy(backoff_s=0.0))
    prompt = compose_actor_prompt(persona, SHOULDER_VIGNETTE)
    assert (
        next_patient_message(persona, make_conv(), gw, prompt=prompt, model="m")
        == "easy does it"
    )


def test_mentions_symptom_handles_multiword_terms():
    assert mentions_symptom("I get shortness of breath on stairs.")
    assert mentions_symptom("The pain is back.")
    assert not mentions_symptom("I parked in the rain this morning.")


def test_jargon_lexicon_loads_and_extends():
    lex = load_jargon_lexicon()
    assert "tendinitis" in lex
    assert "pain" not in lex
    extended = load_jargon_lexicon(["Weird Syndrome", ""])
    assert "weird syndrome" in extended
    assert "weird syndrome" not in lex


def test_r1_flags_clinical_jargon(persona):
    out = lint_actor_message(
        "The doctor said it could be rotator cuff tendinitis.", persona, make_conv()
    )
    assert [(v.rule, v.severity) for v in out] == [("R1", "fail")]
    assert "rotator cuff tendinitis" in out[0].excerpt


def test_r1_matches_hyphenated_variant(persona):
    out = lint_actor_message(
        "Maybe rotator-cuff  tendinitis?", persona, make_conv(), rules=("R1",)
    )
    assert [v.rule for v in out] == ["R1"]


def test_r2_warns_when_first_symptom_report_omits_complaint(persona):
    conv = make_conv(("patient_actor", "Hi"), ("health_ai", "Any symptoms?"))
    out = lint_actor_message("I have a cough.", persona, conv, rules=("R2",))
    assert [(v.rule, v.severity) for v in out] == [("R2", "warn")]


def test_r2_quiet_when_complaint_included(persona):
    conv = make_conv(("patient_actor", "Hi"), ("health_ai", "Any symptoms?"))
    out = lint_actor_message(PATIENT_MESSAGES[3], persona, conv, rules=("R2",))
    assert out == ()


def test_r2_quiet_after_earlier_symptom_report(persona):
    conv = make_conv(
        ("patient_actor", "My shoulder pain is bad."),
        ("health_ai", "Anything else?"),
    )
    out = lint_actor_message("I also have a cough.", persona, conv, rules=("R2",))
    assert out == ()


def test_r3_limit_boundary(persona):
    conv = make_conv(("patient_actor", "Hi"), ("health_ai", "Anything else?"))
    twelve = (
        "Fever chills sweating coughing sneezing wheezing nausea vomiting "
        "diarrhea cramping bloating itching."
    )
    assert lint_actor_message(twelve, persona, conv, rules=("R3",)) == ()
    thirteen = twelve[:-1] + " dizziness."
    out = lint_actor_message(thirteen, persona, conv, rules=("R3",))
    assert [(v.rule, v.severity) for v in out] == [("R3", "warn")]
    assert f"{R3_NOVEL_TOKEN_LIMIT + 1} novel content tokens" in out[0].excerpt


def test_r3_skipped_on_opening_message(persona):
    long_open = "Fever chills sweating coughing sneezing wheezing nausea vomiting diarrhea cramping bloating itching dizziness."
    assert lint_actor_message(long_open, persona, make_conv(), rules=("R3",)) == ()


def test_r4_flags_polarity_contradiction(persona):
    conv = make_conv(
        ("patient_actor", "I didn't have any recent trauma or injury."),
        ("health_ai", "Understood."),
    )
    out = lint_actor_message(
        "The injury happened during practice.", persona, conv, rules=("R4",)
    )
    assert [(v.rule, v.severity) for v in out] == [("R4", "warn")]
    assert "'injury'" in out[0].excerpt


def test_r4_quiet_on_consistent_restatement(persona):
    conv = make_conv(
        ("patient_actor", "I have had a fever since Monday."),
        ("health_ai", "Noted."),
    )
    out = lint_actor_message("Yes, the fever is still there.", persona, conv, rules=("R4",))
    assert out == ()


def test_r5_question_only_flagged_in_opening(persona):
    out = lint_actor_message("Can you help me?", persona, make_conv(), rules=("R5",))
    assert [(v.rule, v.severity) for v in out] == [("R5", "fail")]
    conv = make_conv(("patient_actor", "Hi"), ("health_ai", "Hello."))
    assert lint_actor_message("Can you help me?", persona, conv, rules=("R5",)) == ()


def test_r6_first_person_symptoms_in_proxy_mode():
    v = dataclasses.replace(SHOULDER_VIGNETTE, age=9)
    proxy = build_persona(v)
    out = lint_actor_message("I've been having headaches.", proxy, make_conv(), rules=("R6",))
    assert [(v_.rule, v_.severity) for v_ in out] == [("R6", "warn")]
    out = lint_actor_message("My head hurts all day.", proxy, make_conv(), rules=("R6",))
    assert [v_.rule for v_ in out] == ["R6"]
    clean = lint_actor_message(
        "My son has been having headaches.", proxy, make_conv(), rules=("R6",)
    )
    assert clean == ()


def test_r6_not_applied_outside_proxy_mode(persona):
    out = lint_actor_message("I've been having headaches.", persona, make_conv(), rules=("R6",))
    assert out == ()


def test_r7_meta_references_fail(persona):
    for text in ("The vignette says so.", "I am following a script.", "This role-play is odd."):
        out = lint_actor_message(text, persona, make_conv(), rules=("R7",))
        assert [(v.rule, v.severity) for v in out] == [("R7", "fail")], text
    assert lint_actor_message("As instructed by my doctor.", persona, make_conv(), rules=("R7",)) == ()


def test_rule_subset_is_respected(persona):
    out = lint_actor_message("Why is my tendinitis acting up?", persona, make_conv(), rules=("R1",))
    assert [v.rule for v in out] == ["R1"]


def test_lint_output_independent_of_rule_order(persona):
    text = "Is this script a test?"
    forward = lint_actor_message(text, persona, make_conv(), rules=("R5", "R7"))
    backward = lint_actor_message(text, persona, make_conv(), rules=("R7", "R5"))
    assert forward == backward
    assert [v.rule for v in forward] == ["R5", "R7"]


def test_lint_records_turn_index_and_truncates_excerpt(persona):
    conv = make_conv(("patient_actor", "Hi"), ("health_ai", "Hello."))
    long_tail = "tendinitis " * 40
    out = lint_actor_message(long_tail, persona, conv, rules=("R1",))
    assert out[0].turn_index == 2
    assert len(out[0].excerpt) <= 120


def test_golden_patient_messages_lint_clean(persona):
    lexicon = load_jargon_lexicon(
        (SHOULDER_VIGNETTE.gold_diagnosis, *SHOULDER_VIGNETTE.gold_synonyms)
    )
    conv = make_conv()
    from tests.shoulder_case import AI_MESSAGES

    for i, patient_text in enumerate(PATIENT_MESSAGES):
        out = lint_actor_message(patient_text, persona, conv, lexicon=lexicon)
        assert out == (), f"patient message {i} flagged: {out}"
        pairs = list(conv.turns) + [
            Turn(len(conv.turns), "patient_actor", patient_text, 0.0, "?" in patient_text)
        ]
        if i < len(AI_MESSAGES):
            pairs.append(
                Turn(len(pairs), "health_ai", AI_MESSAGES[i], 0.0, "?" in AI_MESSAGES[i])
            )
        conv = Conversation(
            id=conv.id, vignette_id=conv.vignette_id, run_id=conv.run_id, turns=tuple(pairs)
        )
