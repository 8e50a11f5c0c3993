/**
 * Rubric panel state machine.
 *
 * The rule set is a closed union: the panel can only ever produce payloads
 * whose rules come from this list, so arbitrary strings are unrepresentable
 * in a submission. All transitions are pure functions over PanelState, which
 * keeps them unit-testable without a DOM.
 */

export const MATCH_RULES = ["M1", "M2", "M3", "M4", "M5"] as const;
export const NONMATCH_RULES = ["N1", "N2", "N3"] as const;

export type MatchRule = (typeof MATCH_RULES)[number];
export type NonMatchRule = (typeof NONMATCH_RULES)[number];
export type Rule = MatchRule | NonMatchRule;

export const ALL_RULES: readonly Rule[] = [...MATCH_RULES, ...NONMATCH_RULES];

/** Short names mirroring the server's rule labels. */
export const RULE_NAMES: Record<Rule, string> = {
  M1: "ExactCorrespondence",
  M2: "AlternativeTerminology",
  M3: "IncreasedSpecificity",
  M4: "EquivalentDescription",
  M5: "DirectCausation",
  N1: "NearMatchLessPrecise",
  N2: "UmbrellaTerm",
  N3: "SymptomaticOverlap",
};

/** One-line hints shown next to each rule button. */
export const RULE_HINTS: Record<Rule, string> = {
  M1: "names the gold condition itself",
  M2: "another accepted name for the gold condition",
  M3: "a more specific form of the gold condition",
  M4: "plain-language description equivalent to the gold condition",
  M5: "names the direct cause of the gold condition",
  N1: "close to the gold condition but less precise",
  N2: "a broader category that merely contains the gold condition",
  N3: "a different condition in the same organ system",
};

/** Keyboard-first entry: one key per rule. */
export const KEY_TO_RULE: Record<string, Rule> = {
  "1": "M1",
  "2": "M2",
  "3": "M3",
  "4": "M4",
  "5": "M5",
  "6": "N1",
  "7": "N2",
  "8": "N3",
};

export const KEY_NO_DIAGNOSIS = "0";
export const KEY_TOGGLE_SLOT = "t";
export const KEY_CYCLE_REFERRAL = "r";

export type Slot = "top1" | "top2";

export interface PanelState {
  top1: Rule | null;
  top2: Rule | null;
  referralCorrect: boolean | null;
  rationale: string;
  noDiagnosis: boolean;
  activeSlot: Slot;
}

export function emptyPanel(): PanelState {
  return {
    top1: null,
    top2: null,
    referralCorrect: null,
    rationale: "",
    noDiagnosis: false,
    activeSlot: "top1",
  };
}

export function isRule(value: unknown): value is Rule {
  return typeof value === "string" && (ALL_RULES as readonly string[]).includes(value);
}

export function isMatchRule(rule: Rule): boolean {
  return (MATCH_RULES as readonly string[]).includes(rule);
}

/**
 * Assign a rule to a slot. The top-2 pick includes the top-1 pick, so a
 * matched top-1 forces a matched top-2:
 *  - setting top1 to a match rule upgrades a missing or non-match top2 to
 *    the same rule;
 *  - setting top2 to a non-match rule while top1 is a match is a no-op.
 * Rules are inert while the no-diagnosis toggle is on.
 */
export function setRule(state: PanelState, slot: Slot, rule: Rule): PanelState {
  if (state.noDiagnosis) {
    return state;
  }
  if (
    slot === "top2" &&
    !isMatchRule(rule) &&
    state.top1 !== null &&
    isMatchRule(state.top1)
  ) {
    return state;
  }
  const next: PanelState = { ...state, [slot]: rule };
  if (slot === "top1" && isMatchRule(rule) && (next.top2 === null || !isMatchRule(next.top2))) {
    next.top2 = rule;
  }
  return next;
}

export function toggleSlot(state: PanelState): PanelState {
  return { ...state, activeSlot: state.activeSlot === "top1" ? "top2" : "top1" };
}

/** Turning no-diagnosis on clears any picked rules; turning it off restores nothing. */
export function toggleNoDiagnosis(state: PanelState): PanelState {
  if (state.noDiagnosis) {
    return { ...state, noDiagnosis: false };
  }
  return { ...state, noDiagnosis: true, top1: null, top2: null };
}

export function setReferral(state: PanelState, value: boolean | null): PanelState {
  return { ...state, referralCorrect: value };
}

/** Referral toggle cycles unset -> correct -> incorrect -> unset. */
export function cycleReferral(state: PanelState): PanelState {
  const order: Array<boolean | null> = [null, true, false];
  const idx = order.findIndex((v) => v === state.referralCorrect);
  return setReferral(state, order[(idx + 1) % order.length] ?? null);
}

export function setRationale(state: PanelState, text: string): PanelState {
  return { ...state, rationale: text };
}

/**
 * Apply one keystroke. Returns the next state, or null when the key has no
 * rubric meaning (so the caller can let it through to the browser).
 */
export function applyKey(state: PanelState, key: string): PanelState | null {
  if (key === KEY_TOGGLE_SLOT) {
    return toggleSlot(state);
  }
  if (key === KEY_CYCLE_REFERRAL) {
    return cycleReferral(state);
  }
  if (key === KEY_NO_DIAGNOSIS) {
    return toggleNoDiagnosis(state);
  }
  const rule = KEY_TO_RULE[key];
  if (rule === undefined) {
    return null;
  }
  const next = setRule(state, state.activeSlot, rule);
  if (next === state) {
    return next;
  }
  // After picking top-1 by key, focus moves to top-2 for the next keystroke.
  return state.activeSlot === "top1" ? { ...next, activeSlot: "top2" } : next;
}

/**
 * Submission is enabled only when every required component has a value:
 * either the no-diagnosis confirmation, or both ranked rules plus the
 * referral toggle.
 */
export function canSubmit(state: PanelState): boolean {
  if (state.noDiagnosis) {
    return true;
  }
  return state.top1 !== null && state.top2 !== null && state.referralCorrect !== null;
}

export interface VerdictPayload {
  top1_rule?: Rule;
  top2_rule?: Rule;
  referral_correct?: boolean;
  rationale?: string;
  no_diagnosis?: boolean;
}

/** Build the wire payload; throws if the panel is not submittable. */
export function buildPayload(state: PanelState): VerdictPayload {
  if (!canSubmit(state)) {
    throw new Error("panel is incomplete; submission is disabled");
  }
  const rationale = state.rationale.trim();
  if (state.noDiagnosis) {
    const payload: VerdictPayload = { no_diagnosis: true };
    if (state.referralCorrect !== null) {
      payload.referral_correct = state.referralCorrect;
    }
    if (rationale !== "") {
      payload.rationale = rationale;
    }
    return payload;
  }
  const payload: VerdictPayload = {
    top1_rule: state.top1 as Rule,
    top2_rule: state.top2 as Rule,
    referral_correct: state.referralCorrect as boolean,
  };
  if (rationale !== "") {
    payload.rationale = rationale;
  }
  return payload;
}
