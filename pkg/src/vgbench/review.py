"""Human-review service: pending queue, leased checkout, verdict submission.

A small HTTP API scoped to one stored run.  Reviewers authenticate with a
static bearer token (header ``X-Judge-Token``), check out a pending case to
hold a short exclusive lease, and submit rubric verdicts which are appended
to the run's verdict log.  Report snapshots are computed from the same
aggregation code the CLI uses, so the numbers always agree.
"""

from __future__ import annotations

import threading
import time
from dataclasses import asdict, dataclass

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .corpus import Corpus
from .judge import HUMAN_RULES, CaseJudgment, apply_human_verdict
from .report import load_question_baseline, render, aggregate
from .store import RunStore

DEFAULT_LEASE_SECONDS = 900.0


@dataclass
class Lease:
    judge: str
    expires_at: float

    def active(self, now: float) -> bool:
        return now < self.expires_at


class VerdictPayload(BaseModel):
    top1_rule: str | None = None
    top2_rule: str | None = None
    referral_correct: bool | None = None
    rationale: str = ""
    no_diagnosis: bool = False


class ReviewState:
    """In-memory view of one run plus the lease table.

    The service is the single writer for its run's verdict log, so memory
    and disk stay consistent: every accepted verdict is appended to the
    store before the in-memory judgment map is updated.
    """

    def __init__(
        self,
        store: RunStore,
        run_id: str,
        corpus: Corpus,
        specialty_map: dict[str, str],
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        baseline: dict | None = None,
    ):
        self.store = store
        self.run_id = run_id
        self.corpus = corpus
        self.specialty_map = specialty_map
        self.lease_seconds = lease_seconds
        self.baseline = baseline if baseline is not None else load_question_baseline()
        self.loaded = store.load_run(run_id)
        self.judgments: dict[str, CaseJudgment] = dict(self.loaded.judgments)
        self._pending_order = [
            j.case_id
            for j in self.loaded.verdict_events
            if not self.loaded.judgments[j.case_id].resolved
        ]
        self.leases: dict[str, Lease] = {}
        self.lock = threading.Lock()

    def pending_ids(self) -> list[str]:
        seen: set[str] = set()
        out: list[str] = []
        for case_id in self._pending_order:
            judgment = self.judgments.get(case_id)
            if judgment is None or judgment.resolved or case_id in seen:
                continue
            seen.add(case_id)
            out.append(case_id)
        return out

    def case_summary(self, case_id: str) -> dict:
        judgment = self.judgments[case_id]
        vignette = self.corpus.get(judgment.vignette_id)
        now = time.time()
        lease = self.leases.get(case_id)
        return {
            "case_id": case_id,
            "specialty": vignette.specialty,
            "incidence_class": vignette.incidence_class,
            "judge_kind": judgment.judge_kind,
            "extraction_failed": judgment.extraction_failed,
            "leased": bool(lease and lease.active(now)),
        }

    def case_detail(self, case_id: str) -> dict:
        judgment = self.judgments[case_id]
        vignette = self.corpus.get(judgment.vignette_id)
        conversation = self.loaded.conversations.get(case_id)
        turns = []
        if conversation is not None:
            turns = [
                {
                    "index": t.index,
                    "role": t.role,
                    "text": t.text,
                    "contains_question": t.contains_question,
                }
                for t in conversation.turns
            ]
        return {
            "case_id": case_id,
            "vignette": {
                "id": vignette.id,
                "specialty": vignette.specialty,
                "age": vignette.age,
                "sex": vignette.sex,
                "narrative": vignette.narrative,
                "gold_diagnosis": vignette.gold_diagnosis,
                "gold_synonyms": list(vignette.gold_synonyms),
                "gold_specialty": vignette.gold_specialty,
                "incidence_class": vignette.incidence_class,
            },
            "turns": turns,
            "terminal_state": conversation.terminal_state if conversation else None,
            "candidates": list(judgment.candidates),
            "judgment": {
                "top1_rule": judgment.top1_verdict.rule,
                "top2_rule": judgment.top2_verdict.rule,
                "referral_specialty": judgment.referral_specialty,
                "referral_correct": judgment.referral_correct,
                "judge_kind": judgment.judge_kind,
                "judge_id": judgment.judge_id,
                "rationale": judgment.rationale,
                "extraction_failed": judgment.extraction_failed,
            },
        }

    def checkout(self, case_id: str, judge: str) -> dict:
        with self.lock:
            if case_id not in self.judgments:
                raise HTTPException(status_code=404, detail=f"unknown case {case_id!r}")
            now = time.time()
            lease = self.leases.get(case_id)
            if lease is not None and lease.active(now) and lease.judge != judge:
                raise HTTPException(
                    status_code=409,
                    detail=f"case {case_id!r} is checked out by another judge",
                )
            expires = now + self.lease_seconds
            self.leases[case_id] = Lease(judge=judge, expires_at=expires)
        detail = self.case_detail(case_id)
        detail["lease"] = {"judge": judge, "expires_at": expires}
        return detail

    def submit(self, case_id: str, judge: str, payload: VerdictPayload) -> dict:
        with self.lock:
            if case_id not in self.judgments:
                raise HTTPException(status_code=404, detail=f"unknown case {case_id!r}")
            lease = self.leases.get(case_id)
            now = time.time()
            if lease is None or not lease.active(now):
                raise HTTPException(
                    status_code=409,
                    detail=f"no active lease on {case_id!r}; check the case out first",
                )
            if lease.judge != judge:
                raise HTTPException(
                    status_code=409,
                    detail=f"case {case_id!r} is checked out by another judge",
                )
            if not payload.no_diagnosis:
                if payload.top1_rule is None:
                    raise HTTPException(
                        status_code=422,
                        detail="top1_rule is required unless no_diagnosis is set",
                    )
                for rule in (payload.top1_rule, payload.top2_rule):
                    if rule is not None and rule not in HUMAN_RULES:
                        raise HTTPException(
                            status_code=422,
                            detail=f"rule must be one of {list(HUMAN_RULES)}, got {rule!r}",
                        )
            try:
                updated = apply_human_verdict(
                    self.judgments[case_id],
                    judge_id=judge,
                    top1_rule=payload.top1_rule,
                    top2_rule=payload.top2_rule,
                    referral_correct=payload.referral_correct,
                    rationale=payload.rationale,
                    no_diagnosis=payload.no_diagnosis,
                )
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            self.store.append_verdict(self.run_id, updated)
            self.judgments[case_id] = updated
            self.leases.pop(case_id, None)
        detail = self.case_detail(case_id)
        detail["pending"] = len(self.pending_ids())
        return detail

    def report(self):
        conversations = [
            c
            for c in self.loaded.conversations.values()
            if c.terminal_state is not None
        ]
        return aggregate(
            list(self.judgments.values()),
            conversations,
            self.corpus,
            run_id=self.run_id,
            baseline=self.baseline,
        )


def create_app(
    store: RunStore,
    run_id: str,
    corpus: Corpus,
    specialty_map: dict[str, str],
    tokens: dict[str, str],
    *,
    lease_seconds: float = DEFAULT_LEASE_SECONDS,
    baseline: dict | None = None,
    ui_dist: str | None = None,
) -> FastAPI:
    """Build the review app for one run.

    ``tokens`` maps bearer token to judge name; every mutating endpoint
    requires a valid ``X-Judge-Token`` header.
    """
    if not tokens:
        raise ValueError("at least one judge token is required")
    state = ReviewState(
        store, run_id, corpus, specialty_map,
        lease_seconds=lease_seconds, baseline=baseline,
    )
    app = FastAPI(title="vgbench review", version="1")
    app.state.review = state

    def current_judge(x_judge_token: str | None = Header(default=None)) -> str:
        if x_judge_token is None or x_judge_token not in tokens:
            raise HTTPException(status_code=401, detail="missing or unknown judge token")
        return tokens[x_judge_token]

    @app.get("/runs")
    def list_runs() -> list[dict]:
        out = []
        for manifest in state.store.list_runs():
            entry = {
                "run_id": manifest.run_id,
                "status": manifest.status,
                "served": manifest.run_id == state.run_id,
            }
            if manifest.run_id == state.run_id:
                entry["pending"] = len(state.pending_ids())
            out.append(entry)
        return out

    @app.get("/runs/{run_id}/pending")
    def pending(run_id: str) -> list[dict]:
        if run_id != state.run_id:
            raise HTTPException(status_code=404, detail=f"run {run_id!r} is not served here")
        return [state.case_summary(cid) for cid in state.pending_ids()]

    @app.post("/cases/{case_id}/checkout")
    def checkout(case_id: str, judge: str = Depends(current_judge)) -> dict:
        return state.checkout(case_id, judge)

    @app.post("/cases/{case_id}/verdict")
    def verdict(
        case_id: str,
        payload: VerdictPayload,
        judge: str = Depends(current_judge),
    ) -> dict:
        return state.submit(case_id, judge, payload)

    @app.get("/cases/{case_id}")
    def case_detail(case_id: str) -> dict:
        if case_id not in state.judgments:
            raise HTTPException(status_code=404, detail=f"unknown case {case_id!r}")
        return state.case_detail(case_id)

    @app.get("/runs/{run_id}/report")
    def run_report(run_id: str, format: str = Query(default="json")):
        if run_id != state.run_id:
            raise HTTPException(status_code=404, detail=f"run {run_id!r} is not served here")
        report = state.report()
        if format == "json":
            return asdict(report)
        try:
            data = render(report, format)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        media = "text/csv" if format == "csv" else "text/plain"
        return PlainTextResponse(content=data.decode("utf-8"), media_type=media)

    if ui_dist:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dist, html=True), name="ui")

    return app
