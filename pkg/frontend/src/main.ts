/**
 * View layer: hash-routed pages rendered into #app.
 *
 * Routes:
 *   #/            queue of pending cases for the served run
 *   #/case/<id>   transcript viewer with the rubric panel (checks out a lease)
 *   #/report      live report tables with provisional and unresolved badges
 *
 * Server leases arbitrate multi-judge concurrency; this module keeps only
 * single-session state (current panel, lease expiry timer, judge token).
 */

import {
  ApiError,
  ReviewApi,
  type CaseDetail,
  type PendingCase,
  type ReportJson,
  type SpecialtyRowJson,
} from "./api.js";
import {
  escapeHtml,
  highlightCandidates,
  leaseCountdown,
  meanText,
  pctText,
  roleLabel,
} from "./format.js";
import * as rubric from "./rubric.js";
import {
  clearDraft,
  loadDraft,
  loadToken,
  memoryStore,
  saveDraft,
  saveToken,
  type KeyValueStore,
} from "./storage.js";

function safeLocalStorage(): KeyValueStore {
  try {
    const probe = "vgreview.probe";
    window.localStorage.setItem(probe, "1");
    window.localStorage.removeItem(probe);
    return window.localStorage;
  } catch {
    return memoryStore();
  }
}

const store = safeLocalStorage();

interface SessionState {
  runId: string | null;
  panel: rubric.PanelState;
  currentCase: CaseDetail | null;
  leaseExpiresAt: number | null;
  leaseTimer: number | null;
  keyHandler: ((event: KeyboardEvent) => void) | null;
}

const session: SessionState = {
  runId: null,
  panel: rubric.emptyPanel(),
  currentCase: null,
  leaseExpiresAt: null,
  leaseTimer: null,
  keyHandler: null,
};

function api(): ReviewApi {
  return new ReviewApi({ token: loadToken(store) });
}

function app(): HTMLElement {
  const el = document.getElementById("app");
  if (el === null) {
    throw new Error("missing #app container");
  }
  return el;
}

function teardownCaseView(): void {
  if (session.leaseTimer !== null) {
    window.clearInterval(session.leaseTimer);
    session.leaseTimer = null;
  }
  if (session.keyHandler !== null) {
    document.removeEventListener("keydown", session.keyHandler);
    session.keyHandler = null;
  }
  session.currentCase = null;
  session.leaseExpiresAt = null;
}

// --- shared chrome -----------------------------------------------------------

function headerHtml(): string {
  const token = loadToken(store);
  const tokenNote = token === null ? "no judge token set" : "token saved";
  return `
    <header>
      <h1>Transcript review</h1>
      <nav>
        <a href="#/">Queue</a>
        <a href="#/report">Report</a>
      </nav>
      <form id="token-form">
        <input id="token-input" type="password" placeholder="judge token"
               autocomplete="off" value="" />
        <button type="submit">Save token</button>
        <span class="muted">${escapeHtml(tokenNote)}</span>
      </form>
    </header>`;
}

function wireHeader(): void {
  const form = document.getElementById("token-form") as HTMLFormElement | null;
  if (form === null) {
    return;
  }
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const input = document.getElementById("token-input") as HTMLInputElement;
    if (input.value.trim() !== "") {
      saveToken(store, input.value.trim());
      render();
    }
  });
}

function errorHtml(err: unknown, retryId: string): string {
  const message = err instanceof ApiError ? err.detail : String(err);
  return `
    <div class="error">
      <p>Request failed: ${escapeHtml(message)}</p>
      <button id="${retryId}">Retry</button>
    </div>`;
}

// --- queue view --------------------------------------------------------------

function pendingRowHtml(row: PendingCase): string {
  const flags: string[] = [];
  if (row.extraction_failed) {
    flags.push("no candidates extracted");
  }
  if (row.leased) {
    flags.push("checked out");
  }
  return `
    <tr>
      <td><a href="#/case/${encodeURIComponent(row.case_id)}">${escapeHtml(row.case_id)}</a></td>
      <td>${escapeHtml(row.specialty)}</td>
      <td>${escapeHtml(row.incidence_class)}</td>
      <td>${escapeHtml(flags.join(", "))}</td>
    </tr>`;
}

async function renderQueue(): Promise<void> {
  teardownCaseView();
  app().innerHTML = headerHtml() + `<main><p class="muted">Loading queue…</p></main>`;
  wireHeader();
  try {
    const runs = await api().listRuns();
    const run = runs[0];
    if (run === undefined) {
      app().querySelector("main")!.innerHTML = `<p>No run is being served.</p>`;
      return;
    }
    session.runId = run.run_id;
    const pending = await api().listPending(run.run_id);
    let body: string;
    if (pending.length === 0) {
      body = `
        <div class="banner done">
          <p>Review complete: nothing is waiting for a human verdict.</p>
          <p><a href="#/report">Open the final report</a></p>
        </div>`;
    } else {
      body = `
        <p>Run <strong>${escapeHtml(run.run_id)}</strong> (${escapeHtml(run.status)}):
           ${pending.length} case(s) awaiting review. Gold diagnoses stay hidden
           until you open a case's rubric panel.</p>
        <table>
          <thead><tr><th>Case</th><th>Specialty</th><th>Incidence</th><th>Flags</th></tr></thead>
          <tbody>${pending.map(pendingRowHtml).join("")}</tbody>
        </table>`;
    }
    app().querySelector("main")!.innerHTML = body;
  } catch (err) {
    app().querySelector("main")!.innerHTML = errorHtml(err, "retry-queue");
    document.getElementById("retry-queue")?.addEventListener("click", () => {
      void renderQueue();
    });
  }
}

// --- case view ---------------------------------------------------------------

function turnHtml(turn: { role: string; text: string; contains_question: boolean }, candidates: string[]): string {
  const isAssistant = turn.role === "health_ai";
  const text = isAssistant
    ? highlightCandidates(turn.text, candidates)
    : escapeHtml(turn.text);
  const question = turn.contains_question ? `<span class="badge">?</span>` : "";
  return `
    <div class="turn ${isAssistant ? "assistant" : "patient"}">
      <div class="who">${escapeHtml(roleLabel(turn.role))} ${question}</div>
      <div class="text">${text}</div>
    </div>`;
}

function ruleButtonsHtml(slot: rubric.Slot, panel: rubric.PanelState): string {
  return rubric.ALL_RULES.map((rule) => {
    const selected = panel[slot] === rule ? " selected" : "";
    const kind = rubric.isMatchRule(rule) ? "match" : "nonmatch";
    return `<button type="button" class="rule ${kind}${selected}"
                    data-slot="${slot}" data-rule="${rule}"
                    title="${escapeHtml(rubric.RULE_HINTS[rule])}">
              ${rule}<small>${escapeHtml(rubric.RULE_NAMES[rule])}</small>
            </button>`;
  }).join("");
}

function referralButtonsHtml(panel: rubric.PanelState): string {
  const options: Array<[string, boolean | null]> = [
    ["correct", true],
    ["incorrect", false],
    ["unset", null],
  ];
  return options
    .map(([label, value]) => {
      const selected = panel.referralCorrect === value ? " selected" : "";
      return `<button type="button" class="referral${selected}"
                      data-referral="${String(value)}">${label}</button>`;
    })
    .join("");
}

function rubricPanelHtml(detail: CaseDetail, panel: rubric.PanelState): string {
  const v = detail.vignette;
  const candidates = detail.candidates.length
    ? detail.candidates.map((c) => `<code>${escapeHtml(c)}</code>`).join(", ")
    : "<em>none extracted</em>";
  const submitDisabled = rubric.canSubmit(panel) ? "" : " disabled";
  const noDx = panel.noDiagnosis ? " selected" : "";
  return `
    <details id="rubric" open>
      <summary>Rubric panel (reveals the gold diagnosis)</summary>
      <dl>
        <dt>Gold diagnosis</dt>
        <dd><strong>${escapeHtml(v.gold_diagnosis)}</strong>
            ${v.gold_synonyms.length ? `(also: ${escapeHtml(v.gold_synonyms.join(", "))})` : ""}</dd>
        <dt>Gold specialty</dt><dd>${escapeHtml(v.gold_specialty)}</dd>
        <dt>Extracted candidates</dt><dd>${candidates}</dd>
        <dt>Referral found</dt>
        <dd>${detail.judgment.referral_specialty ? escapeHtml(detail.judgment.referral_specialty) : "<em>none</em>"}</dd>
      </dl>
      <div class="slot ${panel.activeSlot === "top1" ? "active" : ""}" id="slot-top1">
        <h3>Top-1 rule <span class="muted">(keys 1-8)</span></h3>
        ${ruleButtonsHtml("top1", panel)}
      </div>
      <div class="slot ${panel.activeSlot === "top2" ? "active" : ""}" id="slot-top2">
        <h3>Top-2 rule <span class="muted">(press t to switch slots)</span></h3>
        ${ruleButtonsHtml("top2", panel)}
      </div>
      <div class="row">
        <h3>Referral <span class="muted">(press r to cycle)</span></h3>
        ${referralButtonsHtml(panel)}
      </div>
      <div class="row">
        <button type="button" id="no-diagnosis" class="rule${noDx}"
                title="the assistant never committed to any diagnosis (key 0)">
          No diagnosis given
        </button>
      </div>
      <div class="row">
        <label for="rationale">Rationale</label>
        <textarea id="rationale" rows="3">${escapeHtml(panel.rationale)}</textarea>
      </div>
      <button id="submit-verdict"${submitDisabled}>Submit verdict</button>
    </details>`;
}

function caseBodyHtml(detail: CaseDetail, panel: rubric.PanelState): string {
  const v = detail.vignette;
  return `
    <div class="banner" id="lease-banner">
      Lease: <span id="lease-remaining"></span>
    </div>
    <div class="columns">
      <section class="transcript">
        <h2>${escapeHtml(detail.case_id)}
            <span class="muted">${escapeHtml(detail.terminal_state ?? "in progress")}</span></h2>
        <p class="muted">${escapeHtml(v.specialty)}, ${v.age} year old ${escapeHtml(v.sex)},
           ${escapeHtml(v.incidence_class)} condition. Read the transcript before
           opening the rubric panel.</p>
        ${detail.turns.map((t) => turnHtml(t, detail.candidates)).join("")}
      </section>
      <section class="panel" id="panel">
        ${rubricPanelHtml(detail, panel)}
      </section>
    </div>`;
}

function updatePanel(next: rubric.PanelState): void {
  session.panel = next;
  if (session.currentCase !== null) {
    saveDraft(store, session.currentCase.case_id, next);
    const panelEl = document.getElementById("panel");
    if (panelEl !== null) {
      panelEl.innerHTML = rubricPanelHtml(session.currentCase, next);
      wirePanel();
    }
  }
}

function wirePanel(): void {
  const panelEl = document.getElementById("panel");
  if (panelEl === null || session.currentCase === null) {
    return;
  }
  panelEl.querySelectorAll<HTMLButtonElement>("button.rule[data-slot]").forEach((button) => {
    button.addEventListener("click", () => {
      const slot = button.dataset["slot"] as rubric.Slot;
      const rule = button.dataset["rule"];
      if (rubric.isRule(rule)) {
        updatePanel(rubric.setRule({ ...session.panel, activeSlot: slot }, slot, rule));
      }
    });
  });
  panelEl.querySelectorAll<HTMLButtonElement>("button.referral").forEach((button) => {
    button.addEventListener("click", () => {
      const raw = button.dataset["referral"];
      const value = raw === "true" ? true : raw === "false" ? false : null;
      updatePanel(rubric.setReferral(session.panel, value));
    });
  });
  document.getElementById("no-diagnosis")?.addEventListener("click", () => {
    updatePanel(rubric.toggleNoDiagnosis(session.panel));
  });
  const rationale = document.getElementById("rationale") as HTMLTextAreaElement | null;
  rationale?.addEventListener("input", () => {
    session.panel = rubric.setRationale(session.panel, rationale.value);
    if (session.currentCase !== null) {
      saveDraft(store, session.currentCase.case_id, session.panel);
    }
    const submit = document.getElementById("submit-verdict") as HTMLButtonElement | null;
    if (submit !== null) {
      submit.disabled = !rubric.canSubmit(session.panel);
    }
  });
  document.getElementById("submit-verdict")?.addEventListener("click", () => {
    void submitCurrentCase();
  });
}

async function submitCurrentCase(): Promise<void> {
  const detail = session.currentCase;
  if (detail === null || !rubric.canSubmit(session.panel)) {
    return;
  }
  try {
    const result = await api().submitVerdict(detail.case_id, rubric.buildPayload(session.panel));
    clearDraft(store, detail.case_id);
    if (session.runId !== null && result.pending > 0) {
      const pending = await api().listPending(session.runId);
      const next = pending.find((p) => !p.leased) ?? pending[0];
      if (next !== undefined) {
        window.location.hash = `#/case/${encodeURIComponent(next.case_id)}`;
        return;
      }
    }
    window.location.hash = "#/";
  } catch (err) {
    const banner = document.getElementById("lease-banner");
    if (banner !== null) {
      banner.classList.add("warn");
      banner.textContent =
        err instanceof ApiError
          ? `Submit failed (${err.status}): ${err.detail}. Your selections are saved locally.`
          : `Submit failed: ${String(err)}`;
    }
  }
}

function startLeaseTimer(): void {
  const update = (): void => {
    const span = document.getElementById("lease-remaining");
    const banner = document.getElementById("lease-banner");
    if (span === null || banner === null || session.leaseExpiresAt === null) {
      return;
    }
    const text = leaseCountdown(session.leaseExpiresAt, Date.now());
    span.textContent = text;
    if (text === "expired") {
      banner.classList.add("warn");
      banner.innerHTML =
        `Lease expired; your selections are saved locally. ` +
        `<button id="recheckout">Check out again</button>`;
      document.getElementById("recheckout")?.addEventListener("click", () => {
        render();
      });
      if (session.leaseTimer !== null) {
        window.clearInterval(session.leaseTimer);
        session.leaseTimer = null;
      }
    }
  };
  session.leaseTimer = window.setInterval(update, 1000);
  update();
}

function startKeyboard(): void {
  const handler = (event: KeyboardEvent): void => {
    if (event.target instanceof HTMLTextAreaElement || event.target instanceof HTMLInputElement) {
      return;
    }
    if (event.key === "Enter") {
      event.preventDefault();
      void submitCurrentCase();
      return;
    }
    const next = rubric.applyKey(session.panel, event.key);
    if (next !== null) {
      event.preventDefault();
      updatePanel(next);
    }
  };
  document.addEventListener("keydown", handler);
  session.keyHandler = handler;
}

async function renderCase(caseId: string): Promise<void> {
  teardownCaseView();
  app().innerHTML = headerHtml() + `<main><p class="muted">Checking out ${escapeHtml(caseId)}…</p></main>`;
  wireHeader();
  if (loadToken(store) === null) {
    app().querySelector("main")!.innerHTML =
      `<p>Set your judge token above before checking out a case.</p>`;
    return;
  }
  try {
    if (session.runId === null) {
      const runs = await api().listRuns();
      session.runId = runs[0]?.run_id ?? null;
    }
    const detail = await api().checkout(caseId);
    session.currentCase = detail;
    session.leaseExpiresAt = detail.lease.expires_at;
    session.panel = loadDraft(store, caseId) ?? rubric.emptyPanel();
    app().querySelector("main")!.innerHTML = caseBodyHtml(detail, session.panel);
    wirePanel();
    startLeaseTimer();
    startKeyboard();
  } catch (err) {
    let body = errorHtml(err, "retry-case");
    if (err instanceof ApiError && err.status === 409) {
      body = `
        <div class="error">
          <p>${escapeHtml(err.detail)}</p>
          <p><a href="#/">Back to the queue</a></p>
        </div>`;
    }
    app().querySelector("main")!.innerHTML = body;
    document.getElementById("retry-case")?.addEventListener("click", () => {
      void renderCase(caseId);
    });
  }
}

// --- report view -------------------------------------------------------------

function accuracyRowHtml(row: SpecialtyRowJson, strong = false): string {
  const open = strong ? "<strong>" : "";
  const close = strong ? "</strong>" : "";
  return `
    <tr>
      <td>${open}${escapeHtml(row.specialty)}${close}</td>
      <td>${row.total}</td>
      <td>${row.top1_correct}</td><td>${pctText(row.top1_pct)}</td>
      <td>${row.top2_correct}</td><td>${pctText(row.top2_pct)}</td>
      <td>${row.referral_correct}</td><td>${pctText(row.referral_pct)}</td>
      <td>${meanText(row.avg_questions)}</td>
    </tr>`;
}

function reportBodyHtml(report: ReportJson): string {
  const status = report.provisional
    ? `<span class="badge warn">PROVISIONAL</span>`
    : `<span class="badge done">FINAL</span>`;
  const unresolvedBadge =
    report.unresolved > 0
      ? `<span class="badge warn">${report.unresolved} unresolved</span>`
      : "";
  const failed = report.failed_cases.length
    ? `<p>Failed cases (no verdict): ${report.failed_cases.map(escapeHtml).join(", ")}</p>`
    : "";
  const incidence = report.incidence_rows
    .map(
      (row) => `
      <tr>
        <td>${escapeHtml(row.incidence_class)}</td>
        <td>${row.total}</td>
        <td>${pctText(row.top1_pct)}</td>
        <td>${pctText(row.top2_pct)}</td>
        <td>${pctText(row.referral_pct)}</td>
      </tr>`,
    )
    .join("");
  const questions = report.question_rows
    .map(
      (row) => `
      <tr>
        <td>${escapeHtml(row.specialty)}</td>
        <td>${row.conversations}</td>
        <td>${meanText(row.mean_questions)}</td>
        <td>${meanText(row.baseline_mean)}</td>
        <td>${row.pct_fewer === null ? "-" : pctText(row.pct_fewer)}</td>
      </tr>`,
    )
    .join("");
  return `
    <h2>Report: ${escapeHtml(report.run_id)} ${status} ${unresolvedBadge}</h2>
    <p class="muted">Automated verdicts: ${report.judged_automated},
       human verdicts: ${report.judged_human}. Figures are shown exactly as the
       service computed them.</p>
    ${failed}
    <h3>Accuracy by specialty</h3>
    <table>
      <thead><tr><th>Specialty</th><th>Cases</th><th>Top-1</th><th>%</th>
                 <th>Top-2</th><th>%</th><th>Referral</th><th>%</th><th>Avg Q</th></tr></thead>
      <tbody>
        ${report.rows.map((row) => accuracyRowHtml(row)).join("")}
        ${accuracyRowHtml(report.grand_total, true)}
      </tbody>
    </table>
    <h3>Accuracy by incidence class</h3>
    <table>
      <thead><tr><th>Incidence</th><th>Cases</th><th>Top-1 %</th><th>Top-2 %</th><th>Referral %</th></tr></thead>
      <tbody>${incidence}</tbody>
    </table>
    <h3>Questions asked per conversation</h3>
    <table>
      <thead><tr><th>Specialty</th><th>Conversations</th><th>Mean</th>
                 <th>Baseline mean</th><th>% fewer</th></tr></thead>
      <tbody>${questions}</tbody>
    </table>`;
}

async function renderReport(): Promise<void> {
  teardownCaseView();
  app().innerHTML = headerHtml() + `<main><p class="muted">Loading report…</p></main>`;
  wireHeader();
  try {
    if (session.runId === null) {
      const runs = await api().listRuns();
      session.runId = runs[0]?.run_id ?? null;
    }
    if (session.runId === null) {
      app().querySelector("main")!.innerHTML = `<p>No run is being served.</p>`;
      return;
    }
    const report = await api().getReport(session.runId);
    app().querySelector("main")!.innerHTML = reportBodyHtml(report);
  } catch (err) {
    app().querySelector("main")!.innerHTML = errorHtml(err, "retry-report");
    document.getElementById("retry-report")?.addEventListener("click", () => {
      void renderReport();
    });
  }
}

// --- router ------------------------------------------------------------------

function render(): void {
  const hash = window.location.hash;
  const caseMatch = /^#\/case\/(.+)$/.exec(hash);
  if (caseMatch !== null && caseMatch[1] !== undefined) {
    void renderCase(decodeURIComponent(caseMatch[1]));
  } else if (hash === "#/report") {
    void renderReport();
  } else {
    void renderQueue();
  }
}

window.addEventListener("hashchange", render);
render();
