"""Three-case end-to-end fixture shared by the CLI, review, and acceptance tests.

Cases:
  ortho-001  the golden shoulder conversation (synonym match, correct referral)
  endo-001   a short scripted consult where the assistant names a more
             specific condition than the gold label and refers correctly
  neuro-001  recorded with its assistant turns diverted to a throwaway
             cassette, so replaying it misses the cassette and the case
             ends in a gateway failure after the patient's opening

The corpus file, both cassettes, and every expected number derived from them
are frozen here so the tests exercise the real pipeline byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from tests import shoulder_case
from vgbench.corpus import ClinicalVignette, vignette_to_record
from vgbench.gateway import ScriptedProvider, record_gateway
from vgbench.orchestrator import LoopPolicy, run_conversation, turn_clock

ENDO_VIGNETTE = ClinicalVignette(
    id="endo-001",
    specialty="Endocrine",
    age=34,
    sex="female",
    narrative=(
        "A 34 year old female presents with constant fatigue, dizziness when "
        "standing up, and skin that has slowly darkened over three months. "
        "She reports salt cravings and has lost a little weight. She takes "
        "no regular medications."
    ),
    gold_diagnosis="adrenal insufficiency",
    gold_specialty="Endocrine",
    incidence_class="less_common",
    disease_course="chronic",
    presentation_class="typical",
)

NEURO_VIGNETTE = ClinicalVignette(
    id="neuro-001",
    specialty="Neurology",
    age=29,
    sex="female",
    narrative=(
        "A 29 year old female presents with a throbbing headache on one side "
        "of her head that comes back every few weeks. Light and noise make "
        "it worse and she sometimes feels nauseous. She is otherwise well."
    ),
    gold_diagnosis="migraine",
    gold_specialty="Neurology",
    incidence_class="common",
    disease_course="chronic",
    presentation_class="typical",
)

ENDO_PATIENT_MESSAGES = [
    "I've been feeling worn out for months, I get dizzy when I stand up, "
    "and my skin has been getting darker.",
    "It started about three months ago and has slowly gotten worse.",
    "Thank you, that's everything I needed. Goodbye!",
]

ENDO_AI_MESSAGES = [
    "How long has this been going on, and have you noticed anything that "
    "makes it better or worse?",
    "Your symptoms could be due to Addison's disease. I recommend that you "
    "see an endocrinologist for testing.",
    "You're welcome. Take care!",
]

NEURO_PATIENT_MESSAGES = [
    "I've been getting bad headaches on one side of my head, and light "
    "makes them worse.",
    "They come every few weeks and last most of the day.",
    "Thanks, that's all. Goodbye!",
]

NEURO_AI_MESSAGES = [
    "How often do the headaches happen, and how long do they last?",
    "This pattern is consistent with migraine. I suggest you see a "
    "neurologist to confirm.",
    "You're welcome. Goodbye!",
]

VIGNETTES = (shoulder_case.SHOULDER_VIGNETTE, ENDO_VIGNETTE, NEURO_VIGNETTE)

ENDO_TURN_COUNT = 6
ENDO_QUESTION_COUNT = 1
FAILED_CASE_ID = "neuro-001"


@dataclass(frozen=True)
class PipelinePaths:
    corpus: Path
    actor_cassette: Path
    sut_cassette: Path


def write_corpus(path: Path) -> Path:
    lines = [json.dumps(vignette_to_record(v), sort_keys=True) for v in VIGNETTES]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _record_case(vignette, patient_script, ai_script, actor_path, sut_path) -> None:
    actor_gw = record_gateway(ScriptedProvider(list(patient_script)), actor_path)
    sut_gw = record_gateway(ScriptedProvider(list(ai_script)), sut_path)
    conversation = run_conversation(
        vignette,
        shoulder_case.make_sut(sut_gw),
        actor_gw,
        LoopPolicy(actor_model=shoulder_case.ACTOR_MODEL),
        clock=turn_clock(vignette.id),
    )
    assert conversation.terminal_state == "closed_normally", conversation.terminal_state


def build_pipeline_fixture(root: Path) -> PipelinePaths:
    """Write the corpus and record both cassettes under ``root``."""
    root.mkdir(parents=True, exist_ok=True)
    paths = PipelinePaths(
        corpus=write_corpus(root / "corpus.jsonl"),
        actor_cassette=root / "actor.jsonl",
        sut_cassette=root / "sut.jsonl",
    )
    shoulder_case.record_shoulder_cassettes(paths.actor_cassette, paths.sut_cassette)
    _record_case(
        ENDO_VIGNETTE, ENDO_PATIENT_MESSAGES, ENDO_AI_MESSAGES,
        paths.actor_cassette, paths.sut_cassette,
    )
    # The neuro case's assistant turns go to a cassette nobody keeps, so a
    # replay run finds the patient's opening but no assistant response.
    _record_case(
        NEURO_VIGNETTE, NEURO_PATIENT_MESSAGES, NEURO_AI_MESSAGES,
        paths.actor_cassette, root / "discarded-sut.jsonl",
    )
    return paths
