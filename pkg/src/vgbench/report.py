"""Aggregation and rendering of benchmark results.

Builds per-specialty accuracy rows, an incidence-class breakdown, and
question-count efficiency rows, then renders them as an aligned text table,
CSV, or Markdown.  All percentages are rounded half-up to one decimal; the
CSV form parses back into an equal report object.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path

from .corpus import Corpus, SPECIALTIES
from .judge import CaseJudgment
from .orchestrator import Conversation

GRAND_TOTAL_LABEL = "Grand Total"
BASELINE_TOTAL_KEY = "ALL"

RENDER_FORMATS = ("table", "csv", "markdown")

# Compact column labels used by the human-readable renders only; data stays
# keyed by canonical specialty names.
DISPLAY_ALIASES = {
    "Gastroenterology": "GI",
    "Infectious diseases": "Infectious",
}


class ReferentialIntegrityError(ValueError):
    """A judgment or conversation references an unknown counterpart."""


def round_half_up(value: float, ndigits: int = 1) -> float:
    """Round with ties away from zero, as the report tables require.

    Built-in round() breaks ties to even (81.25 -> 81.2); these tables need
    81.25 -> 81.3.
    """
    quantum = Decimal(1).scaleb(-ndigits)
    return float(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def pct(count: int, total: int) -> float:
    if total == 0:
        return 0.0
    return round_half_up(100.0 * count / total)


@dataclass(frozen=True)
class SpecialtyRow:
    specialty: str
    total: int
    top1_correct: int
    top1_pct: float
    top2_correct: int
    top2_pct: float
    referral_correct: int
    referral_pct: float
    avg_questions: float | None = None


@dataclass(frozen=True)
class IncidenceRow:
    incidence_class: str
    total: int
    top1_correct: int
    top1_pct: float
    top2_correct: int
    top2_pct: float
    referral_correct: int
    referral_pct: float


@dataclass(frozen=True)
class QuestionRow:
    specialty: str
    conversations: int
    mean_questions: float | None
    baseline_mean: float | None
    pct_fewer: float | None
    baseline_pct_fewer: float | None


@dataclass(frozen=True)
class BenchmarkReport:
    run_id: str
    rows: tuple[SpecialtyRow, ...]
    grand_total: SpecialtyRow
    incidence_rows: tuple[IncidenceRow, ...] = ()
    question_rows: tuple[QuestionRow, ...] = ()
    question_total: QuestionRow | None = None
    judged_automated: int = 0
    judged_human: int = 0
    unresolved: int = 0
    failed_cases: tuple[str, ...] = ()
    provisional: bool = False


def _specialty_row(
    specialty: str,
    judged: list[CaseJudgment],
    question_counts: list[int],
) -> SpecialtyRow:
    total = len(judged)
    top1 = sum(1 for j in judged if j.top1_verdict.matched)
    top2 = sum(1 for j in judged if j.top2_verdict.matched)
    referral = sum(1 for j in judged if j.referral_correct is True)
    avg_q = round_half_up(sum(question_counts) / len(question_counts)) if question_counts else None
    return SpecialtyRow(
        specialty=specialty,
        total=total,
        top1_correct=top1,
        top1_pct=pct(top1, total),
        top2_correct=top2,
        top2_pct=pct(top2, total),
        referral_correct=referral,
        referral_pct=pct(referral, total),
        avg_questions=avg_q,
    )


def stratify_by_incidence(
    judgments: list[CaseJudgment], corpus: Corpus
) -> tuple[IncidenceRow, ...]:
    """Accuracy rows per incidence class, over resolved judgments only."""
    buckets: dict[str, list[CaseJudgment]] = {}
    for j in judgments:
        if not j.resolved:
            continue
        v = corpus.get(j.vignette_id)
        buckets.setdefault(v.incidence_class, []).append(j)
    rows: list[IncidenceRow] = []
    for cls in ("common", "less_common"):
        judged = buckets.get(cls)
        if not judged:
            continue
        total = len(judged)
        top1 = sum(1 for j in judged if j.top1_verdict.matched)
        top2 = sum(1 for j in judged if j.top2_verdict.matched)
        referral = sum(1 for j in judged if j.referral_correct is True)
        rows.append(
            IncidenceRow(
                incidence_class=cls,
                total=total,
                top1_correct=top1,
                top1_pct=pct(top1, total),
                top2_correct=top2,
                top2_pct=pct(top2, total),
                referral_correct=referral,
                referral_pct=pct(referral, total),
            )
        )
    return tuple(rows)


def load_question_baseline(path: str | Path | None = None) -> dict[str, tuple[float, float | None]]:
    """Baseline mean question counts per specialty: {name: (mean, pct_fewer)}.

    The second element is the percentage-fewer figure as published with the
    baseline, kept for side-by-side display; it is not recomputed.
    """
    if path is None:
        with resources.as_file(
            resources.files("vgbench.data").joinpath("question_baseline.tsv")
        ) as p:
            return load_question_baseline(p)
    table: dict[str, tuple[float, float | None]] = {}
    for line_no, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{line_no}: expected 2 or 3 tab-separated fields")
        name = parts[0].strip()
        mean = float(parts[1])
        published = float(parts[2]) if len(parts) == 3 and parts[2].strip() else None
        table[name] = (mean, published)
    return table


def question_stats(
    conversations: list[Conversation],
    corpus: Corpus,
    baseline: dict[str, tuple[float, float | None]] | None = None,
) -> tuple[tuple[QuestionRow, ...], QuestionRow | None]:
    """Mean questions per consultation by specialty, with baseline deltas.

    Only conversations that closed normally count.  A specialty missing from
    the baseline table gets no percent-fewer figure.
    """
    baseline = baseline or {}
    by_specialty: dict[str, list[int]] = {}
    all_counts: list[int] = []
    for c in conversations:
        if c.terminal_state != "closed_normally":
            continue
        v = corpus.get(c.vignette_id)
        count = c.question_count
        by_specialty.setdefault(v.specialty, []).append(count)
        all_counts.append(count)

    def row(name: str, counts: list[int], key: str) -> QuestionRow:
        mean = round_half_up(sum(counts) / len(counts)) if counts else None
        base = baseline.get(key)
        pct_fewer = None
        if mean is not None and base is not None and base[0] > 0:
            pct_fewer = round_half_up(100.0 * (base[0] - mean) / base[0])
        return QuestionRow(
            specialty=name,
            conversations=len(counts),
            mean_questions=mean,
            baseline_mean=base[0] if base else None,
            pct_fewer=pct_fewer,
            baseline_pct_fewer=base[1] if base else None,
        )

    rows = tuple(
        row(sp, by_specialty[sp], sp) for sp in SPECIALTIES if sp in by_specialty
    )
    total = row(GRAND_TOTAL_LABEL, all_counts, BASELINE_TOTAL_KEY) if all_counts else None
    return rows, total


def aggregate(
    judgments: list[CaseJudgment],
    conversations: list[Conversation],
    corpus: Corpus,
    *,
    run_id: str = "",
    baseline: dict[str, tuple[float, float | None]] | None = None,
) -> BenchmarkReport:
    """Fold judgments and transcripts into a benchmark report.

    Accuracy denominators are resolved judgments; pending judgments and
    failed conversations are surfaced separately and mark the report
    provisional.  Every judgment and conversation must reference a corpus
    vignette, and judgments must reference a supplied conversation.
    """
    known_cases = {c.id for c in conversations}
    for j in judgments:
        try:
            corpus.get(j.vignette_id)
        except KeyError:
            raise ReferentialIntegrityError(
                f"judgment {j.case_id} references unknown vignette {j.vignette_id!r}"
            ) from None
        if known_cases and j.case_id not in known_cases:
            raise ReferentialIntegrityError(
                f"judgment references unknown case {j.case_id!r}"
            )
    for c in conversations:
        try:
            corpus.get(c.vignette_id)
        except KeyError:
            raise ReferentialIntegrityError(
                f"conversation {c.id} references unknown vignette {c.vignette_id!r}"
            ) from None

    resolved = [j for j in judgments if j.resolved]
    unresolved = sum(1 for j in judgments if not j.resolved)
    failed = tuple(
        sorted(c.id for c in conversations if c.terminal_state == "gateway_failure")
    )

    questions_by_case: dict[str, int] = {
        c.id: c.question_count
        for c in conversations
        if c.terminal_state == "closed_normally"
    }
    by_specialty: dict[str, list[CaseJudgment]] = {}
    for j in resolved:
        v = corpus.get(j.vignette_id)
        by_specialty.setdefault(v.specialty, []).append(j)

    rows = []
    for sp in SPECIALTIES:
        judged = by_specialty.get(sp)
        if not judged:
            continue
        counts = [
            questions_by_case[j.case_id] for j in judged if j.case_id in questions_by_case
        ]
        rows.append(_specialty_row(sp, judged, counts))

    all_counts = [
        questions_by_case[j.case_id] for j in resolved if j.case_id in questions_by_case
    ]
    grand = _specialty_row(GRAND_TOTAL_LABEL, resolved, all_counts)

    question_rows, question_total = question_stats(conversations, corpus, baseline)

    return BenchmarkReport(
        run_id=run_id,
        rows=tuple(rows),
        grand_total=grand,
        incidence_rows=stratify_by_incidence(judgments, corpus),
        question_rows=question_rows,
        question_total=question_total,
        judged_automated=sum(1 for j in resolved if j.judge_kind == "automated"),
        judged_human=sum(1 for j in resolved if j.judge_kind == "human"),
        unresolved=unresolved,
        failed_cases=failed,
        provisional=unresolved > 0 or bool(failed),
    )


# --- rendering ------------------------------------------------------------


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.1f}"


def _display(specialty: str) -> str:
    return DISPLAY_ALIASES.get(specialty, specialty)


def _text_table(headers: list[str], body: list[list[str]]) -> list[str]:
    widths = [len(h) for h in headers]
    for row in body:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = []
    header = "  ".join(h.ljust(widths[i]) if i == 0 else h.rjust(widths[i]) for i, h in enumerate(headers))
    lines.append(header)
    lines.append("-" * len(header))
    for row in body:
        lines.append(
            "  ".join(
                cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                for i, cell in enumerate(row)
            )
        )
    return lines


def _specialty_cells(row: SpecialtyRow, display: bool) -> list[str]:
    name = _display(row.specialty) if display else row.specialty
    return [
        name,
        str(row.total),
        str(row.top1_correct),
        _fmt(row.top1_pct),
        str(row.top2_correct),
        _fmt(row.top2_pct),
        str(row.referral_correct),
        _fmt(row.referral_pct),
        _fmt(row.avg_questions),
    ]


_SPECIALTY_HEADERS = ["Specialty", "Cases", "Top-1", "Top-1 %", "Top-2", "Top-2 %", "Referral", "Referral %", "Avg Q"]
_INCIDENCE_HEADERS = ["Incidence", "Cases", "Top-1", "Top-1 %", "Top-2", "Top-2 %", "Referral", "Referral %"]
_QUESTION_HEADERS = ["Specialty", "Conversations", "Mean Q", "Baseline Q", "% Fewer", "Baseline % Fewer"]

_INCIDENCE_LABELS = {"common": "Common", "less_common": "Less Common"}


def _incidence_cells(row: IncidenceRow) -> list[str]:
    return [
        _INCIDENCE_LABELS.get(row.incidence_class, row.incidence_class),
        str(row.total),
        str(row.top1_correct),
        _fmt(row.top1_pct),
        str(row.top2_correct),
        _fmt(row.top2_pct),
        str(row.referral_correct),
        _fmt(row.referral_pct),
    ]


def _question_cells(row: QuestionRow, display: bool) -> list[str]:
    name = _display(row.specialty) if display else row.specialty
    return [
        name,
        str(row.conversations),
        _fmt(row.mean_questions),
        _fmt(row.baseline_mean),
        _fmt(row.pct_fewer),
        _fmt(row.baseline_pct_fewer),
    ]


def _render_table(report: BenchmarkReport) -> str:
    lines: list[str] = []
    title = f"Benchmark report: {report.run_id}" if report.run_id else "Benchmark report"
    lines.append(title)
    status = "PROVISIONAL" if report.provisional else "FINAL"
    lines.append(
        f"Status: {status} "
        f"(automated {report.judged_automated}, human {report.judged_human}, "
        f"unresolved {report.unresolved}, failed {len(report.failed_cases)})"
    )
    lines.append("")
    lines.append("Diagnostic accuracy and referrals by specialty")
    body = [_specialty_cells(r, display=True) for r in report.rows]
    body.append(_specialty_cells(report.grand_total, display=True))
    lines.extend(_text_table(_SPECIALTY_HEADERS, body))
    if report.incidence_rows:
        lines.append("")
        lines.append("Accuracy by incidence class")
        lines.extend(
            _text_table(_INCIDENCE_HEADERS, [_incidence_cells(r) for r in report.incidence_rows])
        )
    if report.question_rows:
        lines.append("")
        lines.append("Questions per consultation")
        qbody = [_question_cells(r, display=True) for r in report.question_rows]
        if report.question_total is not None:
            qbody.append(_question_cells(report.question_total, display=True))
        lines.extend(_text_table(_QUESTION_HEADERS, qbody))
    if report.failed_cases:
        lines.append("")
        lines.append("Failed cases (no verdict): " + ", ".join(report.failed_cases))
    if report.unresolved:
        lines.append("Unresolved verdicts awaiting human review: " + str(report.unresolved))
    lines.append("")
    return "\n".join(lines)


def _render_markdown(report: BenchmarkReport) -> str:
    def md_table(headers: list[str], body: list[list[str]]) -> list[str]:
        out = ["| " + " | ".join(headers) + " |"]
        out.append("|" + "|".join("---" for _ in headers) + "|")
        for row in body:
            out.append("| " + " | ".join(cell or "-" for cell in row) + " |")
        return out

    lines = [f"# Benchmark report: {report.run_id}" if report.run_id else "# Benchmark report", ""]
    status = "PROVISIONAL" if report.provisional else "FINAL"
    lines.append(
        f"Status: **{status}** (automated {report.judged_automated}, "
        f"human {report.judged_human}, unresolved {report.unresolved}, "
        f"failed {len(report.failed_cases)})"
    )
    lines.append("")
    lines.append("## Diagnostic accuracy and referrals by specialty")
    lines.append("")
    body = [_specialty_cells(r, display=True) for r in report.rows]
    body.append(_specialty_cells(report.grand_total, display=True))
    lines.extend(md_table(_SPECIALTY_HEADERS, body))
    if report.incidence_rows:
        lines.extend(["", "## Accuracy by incidence class", ""])
        lines.extend(md_table(_INCIDENCE_HEADERS, [_incidence_cells(r) for r in report.incidence_rows]))
    if report.question_rows:
        lines.extend(["", "## Questions per consultation", ""])
        qbody = [_question_cells(r, display=True) for r in report.question_rows]
        if report.question_total is not None:
            qbody.append(_question_cells(report.question_total, display=True))
        lines.extend(md_table(_QUESTION_HEADERS, qbody))
    if report.failed_cases:
        lines.extend(["", "Failed cases (no verdict): " + ", ".join(report.failed_cases)])
    lines.append("")
    return "\n".join(lines)


def _render_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "key", "values"])
    w.writerow(["meta", "run_id", report.run_id])
    w.writerow(["meta", "provisional", "true" if report.provisional else "false"])
    w.writerow(["meta", "judged_automated", str(report.judged_automated)])
    w.writerow(["meta", "judged_human", str(report.judged_human)])
    w.writerow(["meta", "unresolved", str(report.unresolved)])
    w.writerow(["meta", "failed_cases", ";".join(report.failed_cases)])
    for row in report.rows:
        w.writerow(["specialty"] + _specialty_cells(row, display=False))
    w.writerow(["total"] + _specialty_cells(report.grand_total, display=False))
    for irow in report.incidence_rows:
        w.writerow([
            "incidence", irow.incidence_class, str(irow.total),
            str(irow.top1_correct), _fmt(irow.top1_pct),
            str(irow.top2_correct), _fmt(irow.top2_pct),
            str(irow.referral_correct), _fmt(irow.referral_pct),
        ])
    for qrow in report.question_rows:
        w.writerow(["question"] + _question_cells(qrow, display=False))
    if report.question_total is not None:
        w.writerow(["question_total"] + _question_cells(report.question_total, display=False))
    return buf.getvalue()


def render(report: BenchmarkReport, fmt: str = "table") -> bytes:
    """Render a report deterministically; equal reports give equal bytes."""
    if fmt == "table":
        return _render_table(report).encode("utf-8")
    if fmt == "csv":
        return _render_csv(report).encode("utf-8")
    if fmt == "markdown":
        return _render_markdown(report).encode("utf-8")
    raise ValueError(f"format must be one of {RENDER_FORMATS}, got {fmt!r}")


def _parse_float(cell: str) -> float | None:
    return None if cell == "" else float(cell)


def parse_csv_report(data: bytes) -> BenchmarkReport:
    """Inverse of render(report, "csv")."""
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    header = next(reader, None)
    if header != ["section", "key", "values"]:
        raise ValueError("not a benchmark report CSV")
    meta: dict[str, str] = {}
    rows: list[SpecialtyRow] = []
    grand: SpecialtyRow | None = None
    incidence: list[IncidenceRow] = []
    questions: list[QuestionRow] = []
    question_total: QuestionRow | None = None

    def specialty_from(cells: list[str]) -> SpecialtyRow:
        return SpecialtyRow(
            specialty=cells[0],
            total=int(cells[1]),
            top1_correct=int(cells[2]),
            top1_pct=float(cells[3]),
            top2_correct=int(cells[4]),
            top2_pct=float(cells[5]),
            referral_correct=int(cells[6]),
            referral_pct=float(cells[7]),
            avg_questions=_parse_float(cells[8]),
        )

    def question_from(cells: list[str]) -> QuestionRow:
        return QuestionRow(
            specialty=cells[0],
            conversations=int(cells[1]),
            mean_questions=_parse_float(cells[2]),
            baseline_mean=_parse_float(cells[3]),
            pct_fewer=_parse_float(cells[4]),
            baseline_pct_fewer=_parse_float(cells[5]),
        )

    for record in reader:
        if not record:
            continue
        section, rest = record[0], record[1:]
        if section == "meta":
            meta[rest[0]] = rest[1] if len(rest) > 1 else ""
        elif section == "specialty":
            rows.append(specialty_from(rest))
        elif section == "total":
            grand = specialty_from(rest)
        elif section == "incidence":
            incidence.append(
                IncidenceRow(
                    incidence_class=rest[0],
                    total=int(rest[1]),
                    top1_correct=int(rest[2]),
                    top1_pct=float(rest[3]),
                    top2_correct=int(rest[4]),
                    top2_pct=float(rest[5]),
                    referral_correct=int(rest[6]),
                    referral_pct=float(rest[7]),
                )
            )
        elif section == "question":
            questions.append(question_from(rest))
        elif section == "question_total":
            question_total = question_from(rest)
        else:
            raise ValueError(f"unknown section {section!r}")
    if grand is None:
        raise ValueError("report CSV has no grand total row")
    failed = tuple(x for x in meta.get("failed_cases", "").split(";") if x)
    return BenchmarkReport(
        run_id=meta.get("run_id", ""),
        rows=tuple(rows),
        grand_total=grand,
        incidence_rows=tuple(incidence),
        question_rows=tuple(questions),
        question_total=question_total,
        judged_automated=int(meta.get("judged_automated", "0")),
        judged_human=int(meta.get("judged_human", "0")),
        unresolved=int(meta.get("unresolved", "0")),
        failed_cases=failed,
        provisional=meta.get("provisional") == "true",
    )
