"""Golden shoulder-pain case shared across the test modules.

One fully scripted 26-turn conversation between a simulated patient and a
diagnostic assistant, with a vignette whose gold diagnosis the assistant
names through a synonym.  All expected values in the tests (turn count,
question count, lint results, extraction, verdicts) were worked out by hand
from these verbatim messages.
"""

from __future__ import annotations

from pathlib import Path

from vgbench.corpus import ClinicalVignette
from vgbench.gateway import ScriptedProvider, record_gateway, replay_gateway
from vgbench.orchestrator import (
    Conversation,
    LoopPolicy,
    SystemUnderTest,
    run_conversation,
    turn_clock,
)

SHOULDER_VIGNETTE = ClinicalVignette(
    id="ortho-001",
    specialty="Orthopedics and Rheumatology",
    age=23,
    sex="male",
    narrative=(
        "A 23 year old male presents with a dull-aching pain in his shoulder "
        "that has lasted about a week. The pain worsens with overhead "
        "movement and he cannot play tennis. He reports no trauma, no "
        "swelling, and no numbness. He is otherwise healthy and takes no "
        "medications."
    ),
    gold_diagnosis="shoulder impingement syndrome",
    gold_specialty="Orthopedics and Rheumatology",
    incidence_class="common",
    disease_course="chronic",
    presentation_class="typical",
)

PATIENT_MESSAGES = [
    "Hi August",
    "Sure, I'm a 23 year old, male.",
    "No, I'm not taking any medications right now.",
    "Yes, I've been having this dull-aching pain in my shoulder for about "
    "a week now. It's not getting any better, and it stops me from moving "
    "my shoulder.",
    "I didn't have any recent trauma or injury.",
    "Yes, I'm a tennis player and I've been preparing for a big tournament "
    "next month.",
    "It hurts when I raise my arm or reach behind my back.",
    "No, I haven't noticed any swelling or redness around my shoulder.",
    "No numbness or tingling.",
    "I haven't experienced any fever or fatigue, and I haven't lost any "
    "weight recently.",
    "No, this is the first time it has been this bad.",
    "I haven't noticed any weakness, but I do have difficulty putting my "
    "jacket on because of the pain.",
    "Thank you for the advice. I think that's all I needed to know for "
    "now. I appreciate your help!",
]

AI_MESSAGES = [
    "Hello! I'm August, here to help you figure out what might be going "
    "on. Could you tell me a bit about yourself, starting with your age "
    "and sex?",
    "Thanks. Are you taking any medications, supplements, or treatments "
    "at the moment?",
    "Are you currently experiencing any symptoms or health concerns that "
    "you'd like to discuss?",
    "Did you have any recent trauma or injury to the shoulder?",
    "Do you play any sports or do activities that involve repetitive "
    "shoulder movement?",
    "Which movements make the pain worse, for example raising your arm or "
    "reaching behind your back?",
    "Have you noticed any swelling or redness around the shoulder?",
    "Do you feel any numbness or tingling in your arm or hand?",
    "Thanks, that's helpful. The possibility of conditions like rotator "
    "cuff tendinitis or shoulder impingement comes to mind, but I need a "
    "bit more information. Have you experienced any fever, fatigue, or "
    "weight loss recently?",
    "Has anything like this happened before, or is this the first time?",
    "Do you have any weakness in the arm, or difficulty with everyday "
    "tasks?",
    "Based on what you've told me, your symptoms are consistent with "
    "rotator cuff tendinitis or shoulder impingement. I'd recommend "
    "seeing an orthopedic specialist for an examination. In the meantime, "
    "rest the shoulder and avoid overhead movements.",
    "You're welcome! Take care, and I hope your shoulder feels better "
    "soon. Goodbye!",
]

TURN_COUNT = 26
QUESTION_COUNT = 11
FIRST_ASSESSMENT_TURN = 17
FINAL_ASSESSMENT_TURN = 23

SUT_NAME = "august"
SUT_VERSION = "1.0"
SUT_MODEL = "sut-model"
ACTOR_MODEL = "patient-actor"


def make_sut(gateway) -> SystemUnderTest:
    return SystemUnderTest(
        name=SUT_NAME, version=SUT_VERSION, model=SUT_MODEL, gateway=gateway
    )


def record_shoulder_cassettes(
    actor_cassette: Path, sut_cassette: Path, **kwargs
) -> Conversation:
    """Drive the scripted conversation once in record mode, filling both
    cassettes so later tests can replay it without any provider."""
    actor_gw = record_gateway(ScriptedProvider(list(PATIENT_MESSAGES)), actor_cassette)
    sut_gw = record_gateway(ScriptedProvider(list(AI_MESSAGES)), sut_cassette)
    return run_conversation(
        SHOULDER_VIGNETTE,
        make_sut(sut_gw),
        actor_gw,
        LoopPolicy(actor_model=ACTOR_MODEL),
        clock=turn_clock(SHOULDER_VIGNETTE.id),
        **kwargs,
    )


def replay_shoulder_conversation(
    actor_cassette: Path, sut_cassette: Path, **kwargs
) -> Conversation:
    return run_conversation(
        SHOULDER_VIGNETTE,
        make_sut(replay_gateway(sut_cassette)),
        replay_gateway(actor_cassette),
        LoopPolicy(actor_model=ACTOR_MODEL),
        clock=turn_clock(SHOULDER_VIGNETTE.id),
        **kwargs,
    )
