"""Build a small stored run for exercising the review UI end to end.

Writes a corpus and a closed run under the given root:
  - neuro-101: the assistant names the gold condition, so the automated
    rubric resolves it without human help;
  - card-101: the assistant only describes the condition in plain words, so
    extraction fails and the case waits for a human verdict;
  - hema-101: the assistant never commits to a diagnosis at all, the other
    shape of case a human must settle.

Usage: python3 make_fixture_run.py <root-dir>
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from vgbench.corpus import ClinicalVignette, load_corpus, vignette_to_record
from vgbench.judge import bundled_graph, bundled_specialty_map, judge_case
from vgbench.orchestrator import Conversation, Turn
from vgbench.store import RunManifest, RunStore

RUN_ID = "ui-fixture"

VIGNETTES = (
    ClinicalVignette(
        id="neuro-101",
        specialty="Neurology",
        age=29,
        sex="female",
        narrative=(
            "A 29 year old female reports a throbbing one-sided headache with "
            "nausea and sensitivity to light, recurring a few times a month."
        ),
        gold_diagnosis="migraine",
        gold_specialty="Neurology",
        incidence_class="common",
        disease_course="chronic",
        presentation_class="typical",
    ),
    ClinicalVignette(
        id="card-101",
        specialty="Cardiovascular",
        age=58,
        sex="female",
        narrative=(
            "A 58 year old female reports breathlessness on exertion and "
            "palpitations. A murmur was noted at her last checkup."
        ),
        gold_diagnosis="mitral stenosis",
        gold_specialty="Cardiovascular",
        incidence_class="less_common",
        disease_course="chronic",
        presentation_class="typical",
    ),
    ClinicalVignette(
        id="hema-101",
        specialty="Hematology",
        age=41,
        sex="male",
        narrative=(
            "A 41 year old male reports tiredness, pale skin, and brittle "
            "nails that have developed over several months."
        ),
        gold_diagnosis="iron deficiency anemia",
        gold_specialty="Hematology",
        incidence_class="common",
        disease_course="chronic",
        presentation_class="typical",
    ),
)

SCRIPTS: dict[str, tuple[tuple[str, str], ...]] = {
    "neuro-101": (
        ("patient_actor", "Hi, I keep getting really bad headaches on one side of my head."),
        ("health_ai", "I'm sorry to hear that. Do you feel sick or notice light bothering you during them?"),
        ("patient_actor", "Yes, both. I usually have to lie down in a dark room."),
        ("health_ai", "Your symptoms are consistent with migraine. I recommend that you see a neurologist to discuss treatment."),
        ("patient_actor", "Thank you, that's everything I needed. Goodbye!"),
        ("health_ai", "You're welcome. Take care!"),
    ),
    "card-101": (
        ("patient_actor", "Hello, I get out of breath going up stairs and my heart races."),
        ("health_ai", "Thanks for telling me. Has anyone ever mentioned a murmur when listening to your chest?"),
        ("patient_actor", "Yes, my doctor heard one at my last checkup."),
        ("health_ai", "This could be due to a narrowing of the valve between the upper and lower chambers of your heart. I recommend that you see a cardiologist for an ultrasound of the heart."),
        ("patient_actor", "Thank you, that's all I wanted to know. Goodbye!"),
        ("health_ai", "You're welcome. Take care!"),
    ),
    "hema-101": (
        ("patient_actor", "Hi, I've been very tired lately and people say I look pale."),
        ("health_ai", "How long has this been going on, and have you noticed changes in your nails or hair?"),
        ("patient_actor", "A few months. My nails chip very easily now."),
        ("health_ai", "I can't settle on a single explanation from this conversation alone. I recommend that you see a hematologist for blood work."),
        ("patient_actor", "Okay, thank you. Goodbye!"),
        ("health_ai", "You're welcome. Take care!"),
    ),
}


def build_conversation(case_id: str) -> Conversation:
    turns = tuple(
        Turn(
            index=i,
            role=role,
            text=text,
            timestamp=float(i),
            contains_question="?" in text,
        )
        for i, (role, text) in enumerate(SCRIPTS[case_id])
    )
    return Conversation(
        id=case_id,
        vignette_id=case_id,
        run_id=RUN_ID,
        turns=turns,
        terminal_state="closed_normally",
    )


def main(root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    corpus_path = root / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for vignette in VIGNETTES:
            fh.write(json.dumps(vignette_to_record(vignette), sort_keys=True) + "\n")
    corpus = load_corpus(corpus_path)

    store = RunStore(root / "bench")
    store.open_run(RunManifest(
        run_id=RUN_ID,
        corpus_hash=corpus.content_hash,
        sut_name="scripted-sut",
        sut_version="1.0",
        sut_model="sut-model",
        actor_model="patient-actor",
        gateway_mode="replay",
        guideline_version="pa-guidelines-1",
        corpus_path=str(corpus_path),
    ))

    kg = bundled_graph()
    specialty_map = bundled_specialty_map()
    for vignette in VIGNETTES:
        conversation = build_conversation(vignette.id)
        for turn in conversation.turns:
            store.append_turn(RUN_ID, vignette.id, turn)
        store.append_terminal(RUN_ID, vignette.id, "closed_normally", conversation.question_count)
        store.append_verdict(RUN_ID, judge_case(conversation, vignette, kg, specialty_map))
    store.close_run(RUN_ID)

    loaded = store.load_run(RUN_ID)
    pending = sorted(
        case_id for case_id, j in loaded.judgments.items() if not j.resolved
    )
    assert pending == ["card-101", "hema-101"], pending
    print(f"fixture run {RUN_ID} at {root / 'bench'}: {len(loaded.judgments)} cases, "
          f"{len(pending)} pending")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        print("usage: make_fixture_run.py <root-dir>", file=sys.stderr)
        raise SystemExit(2)
    main(Path(sys.argv[1]))
