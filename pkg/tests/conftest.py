from __future__ import annotations

import pytest

from tests import pipeline_fixture, shoulder_case, table_fixtures


@pytest.fixture(scope="session")
def pipeline_paths(tmp_path_factory):
    """Corpus plus cassettes for the three-case end-to-end runs."""
    root = tmp_path_factory.mktemp("pipeline")
    return pipeline_fixture.build_pipeline_fixture(root)


@pytest.fixture(scope="session")
def shoulder_cassettes(tmp_path_factory):
    """Record the golden conversation once; yield the two cassette paths."""
    root = tmp_path_factory.mktemp("shoulder-cassettes")
    actor = root / "actor.jsonl"
    sut = root / "sut.jsonl"
    shoulder_case.record_shoulder_cassettes(actor, sut)
    return actor, sut


@pytest.fixture(scope="session")
def golden_conversation(shoulder_cassettes):
    actor, sut = shoulder_cassettes
    return shoulder_case.replay_shoulder_conversation(actor, sut)


@pytest.fixture(scope="session")
def table_fixture():
    return table_fixtures.build_table_fixture()
