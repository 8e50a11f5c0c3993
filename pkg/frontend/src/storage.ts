/**
 * Local draft persistence.
 *
 * Rubric selections are saved on every change, keyed by case id, so a lease
 * expiring mid-review loses nothing: the draft is restored on re-checkout
 * and cleared only after a successful submit. The store is injected as a
 * narrow interface so tests run without a browser and the UI can fall back
 * to an in-memory map when localStorage is unavailable.
 */

import { emptyPanel, isRule, type PanelState } from "./rubric.js";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const DRAFT_PREFIX = "vgreview.draft.";
const TOKEN_KEY = "vgreview.token";

export function memoryStore(): KeyValueStore {
  const map = new Map<string, string>();
  return {
    getItem: (key) => (map.has(key) ? (map.get(key) as string) : null),
    setItem: (key, value) => {
      map.set(key, value);
    },
    removeItem: (key) => {
      map.delete(key);
    },
  };
}

export function saveDraft(store: KeyValueStore, caseId: string, state: PanelState): void {
  const record = {
    top1: state.top1,
    top2: state.top2,
    referralCorrect: state.referralCorrect,
    rationale: state.rationale,
    noDiagnosis: state.noDiagnosis,
  };
  store.setItem(DRAFT_PREFIX + caseId, JSON.stringify(record));
}

/**
 * Load a draft, tolerating anything corrupt: unparseable JSON, wrong shapes,
 * or rule strings outside the closed set all come back as null rather than
 * poisoning the panel.
 */
export function loadDraft(store: KeyValueStore, caseId: string): PanelState | null {
  const raw = store.getItem(DRAFT_PREFIX + caseId);
  if (raw === null) {
    return null;
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof parsed !== "object" || parsed === null) {
    return null;
  }
  const record = parsed as Record<string, unknown>;
  const top1 = record["top1"];
  const top2 = record["top2"];
  const referral = record["referralCorrect"];
  const rationale = record["rationale"];
  const noDiagnosis = record["noDiagnosis"];
  if (top1 !== null && !isRule(top1)) {
    return null;
  }
  if (top2 !== null && !isRule(top2)) {
    return null;
  }
  if (referral !== null && typeof referral !== "boolean") {
    return null;
  }
  if (typeof rationale !== "string" || typeof noDiagnosis !== "boolean") {
    return null;
  }
  return {
    ...emptyPanel(),
    top1: top1 === null ? null : top1,
    top2: top2 === null ? null : top2,
    referralCorrect: referral === null ? null : referral,
    rationale,
    noDiagnosis,
  };
}

export function clearDraft(store: KeyValueStore, caseId: string): void {
  store.removeItem(DRAFT_PREFIX + caseId);
}

export function saveToken(store: KeyValueStore, token: string): void {
  store.setItem(TOKEN_KEY, token);
}

export function loadToken(store: KeyValueStore): string | null {
  const token = store.getItem(TOKEN_KEY);
  return token === null || token === "" ? null : token;
}

export function clearToken(store: KeyValueStore): void {
  store.removeItem(TOKEN_KEY);
}
