/**
 * End-to-end: a real review service process serving a fixture run, driven
 * through the typed client exactly as the views drive it. Requires python3
 * with the backend package installed (as in this repository's dev setup).
 */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { existsSync, mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, ReviewApi } from "../src/api.js";
import { applyKey, buildPayload, emptyPanel, setRationale, setReferral } from "../src/rubric.js";

const FRONTEND_ROOT = dirname(dirname(fileURLToPath(import.meta.url)));
const REPO_ROOT = dirname(FRONTEND_ROOT);
const RUN_ID = "ui-fixture";
const PORT = 8400 + (process.pid % 400);
const BASE = `http://127.0.0.1:${PORT}`;

let fixtureRoot = "";
let server: ChildProcess | null = null;
let serverLog = "";

const anon = new ReviewApi({ baseUrl: BASE });
const alice = new ReviewApi({ baseUrl: BASE, token: "tok-a" });
const briar = new ReviewApi({ baseUrl: BASE, token: "tok-b" });

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      await anon.listRuns();
      return;
    } catch {
      if (Date.now() > deadline) {
        throw new Error(`review service did not come up on ${BASE}\n${serverLog}`);
      }
      await new Promise((resolve) => setTimeout(resolve, 150));
    }
  }
}

beforeAll(async () => {
  fixtureRoot = mkdtempSync(join(tmpdir(), "vgreview-"));
  execFileSync("python3", [join(FRONTEND_ROOT, "scripts", "make_fixture_run.py"), fixtureRoot], {
    cwd: REPO_ROOT,
  });
  const distDir = join(FRONTEND_ROOT, "dist");
  const args = [
    "-m",
    "vgbench.cli",
    "serve-review",
    "--run",
    RUN_ID,
    "--runs-root",
    join(fixtureRoot, "bench"),
    "--host",
    "127.0.0.1",
    "--port",
    String(PORT),
    "--token",
    "alice:tok-a",
    "--token",
    "briar:tok-b",
  ];
  if (existsSync(join(distDir, "index.html"))) {
    args.push("--ui-dist", distDir);
  }
  server = spawn("python3", args, { cwd: REPO_ROOT });
  server.stdout?.on("data", (chunk: Buffer) => {
    serverLog += chunk.toString();
  });
  server.stderr?.on("data", (chunk: Buffer) => {
    serverLog += chunk.toString();
  });
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill();
  if (fixtureRoot !== "") {
    rmSync(fixtureRoot, { recursive: true, force: true });
  }
});

function cliReportCsv(): string {
  return execFileSync(
    "python3",
    [
      "-m",
      "vgbench.cli",
      "report",
      "--run",
      RUN_ID,
      "--runs-root",
      join(fixtureRoot, "bench"),
      "--format",
      "csv",
      "--stdout",
    ],
    { cwd: REPO_ROOT, encoding: "utf-8" },
  );
}

describe("adjudication loop against a live service", () => {
  it("serves the fixture run with two cases pending", async () => {
    const runs = await anon.listRuns();
    expect(runs).toHaveLength(1);
    expect(runs[0]!.run_id).toBe(RUN_ID);
    expect(runs[0]!.pending).toBe(2);
  });

  it("hides gold fields in the pending queue", async () => {
    const pending = await anon.listPending(RUN_ID);
    expect(pending.map((p) => p.case_id)).toEqual(["card-101", "hema-101"]);
    for (const row of pending) {
      expect(Object.keys(row)).not.toContain("gold_diagnosis");
      expect(row.extraction_failed).toBe(true);
    }
  });

  it("starts with a provisional report and one automated verdict", async () => {
    const report = await anon.getReport(RUN_ID);
    expect(report.provisional).toBe(true);
    expect(report.unresolved).toBe(2);
    expect(report.judged_automated).toBe(1);
    expect(report.grand_total.total).toBe(1);
  });

  it("grants one lease and rejects the concurrent second checkout", async () => {
    const detail = await alice.checkout("card-101");
    expect(detail.lease.judge).toBe("alice");
    expect(detail.vignette.gold_diagnosis).toBe("mitral stenosis");
    expect(detail.turns).toHaveLength(6);

    const conflict = await briar.checkout("card-101").catch((e: unknown) => e);
    expect(conflict).toBeInstanceOf(ApiError);
    expect((conflict as ApiError).status).toBe(409);
  });

  it("rejects a verdict from a judge without the lease", async () => {
    const err = await briar
      .submitVerdict("card-101", { no_diagnosis: true })
      .catch((e: unknown) => e);
    expect((err as ApiError).status).toBe(409);
  });

  it("accepts the leaseholder's equivalent-description verdict and shrinks the queue", async () => {
    let panel = emptyPanel();
    panel = applyKey(panel, "4")!; // equivalent description; top2 follows top1
    panel = setReferral(panel, true);
    panel = setRationale(panel, "described the narrowed valve in plain words");
    const result = await alice.submitVerdict("card-101", buildPayload(panel));
    expect(result.pending).toBe(1);
    expect(result.judgment.top1_rule).toBe("M4");
    expect(result.judgment.top2_rule).toBe("M4");
    expect(result.judgment.judge_kind).toBe("human");
    expect(result.judgment.judge_id).toBe("alice");

    const pending = await anon.listPending(RUN_ID);
    expect(pending.map((p) => p.case_id)).toEqual(["hema-101"]);
  });

  it("reflects the verdict in the report and matches the CLI render byte for byte", async () => {
    const report = await anon.getReport(RUN_ID);
    expect(report.unresolved).toBe(1);
    expect(report.judged_human).toBe(1);
    expect(report.grand_total.total).toBe(2);
    expect(report.grand_total.top1_correct).toBe(2);

    const serviceCsv = await anon.getReportText(RUN_ID, "csv");
    expect(serviceCsv).toBe(cliReportCsv());
  });

  it("rejects rubric-set violations at the service boundary too", async () => {
    await briar.checkout("hema-101");
    const raw = await fetch(`${BASE}/cases/hema-101/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json", "X-Judge-Token": "tok-b" },
      body: JSON.stringify({ top1_rule: "M9" }),
    });
    expect(raw.status).toBe(422);
  });

  it("settles the remaining case with a no-diagnosis confirmation", async () => {
    await briar.checkout("hema-101");
    const result = await briar.submitVerdict("hema-101", {
      no_diagnosis: true,
      referral_correct: true,
      rationale: "assistant never committed to a condition",
    });
    expect(result.pending).toBe(0);

    const report = await anon.getReport(RUN_ID);
    expect(report.provisional).toBe(false);
    expect(report.unresolved).toBe(0);
    expect(report.judged_human).toBe(2);
    expect(report.grand_total.total).toBe(3);
    const serviceCsv = await anon.getReportText(RUN_ID, "csv");
    expect(serviceCsv).toBe(cliReportCsv());
  });

  it("serves the built UI shell when present", async () => {
    if (!existsSync(join(FRONTEND_ROOT, "dist", "index.html"))) {
      return;
    }
    const page = await fetch(`${BASE}/ui/`);
    expect(page.status).toBe(200);
    const html = await page.text();
    expect(html).toContain("Transcript review");
    const js = await fetch(`${BASE}/ui/main.js`);
    expect(js.status).toBe(200);
  });
});
