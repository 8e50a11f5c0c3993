/**
 * Display formatting helpers.
 *
 * Every accuracy figure shown in the UI is a value the service computed;
 * these helpers only turn numbers into strings and text into safe HTML.
 * No percentage is ever derived from counts on the client.
 */

const HTML_ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) => HTML_ESCAPES[c] as string);
}

/** Render a service-computed percentage to one decimal place. */
export function pctText(value: number | null | undefined): string {
  if (value === null || value === undefined) {
    return "";
  }
  return value.toFixed(1);
}

/** Render a service-computed mean; missing values show as a dash. */
export function meanText(value: number | null | undefined): string {
  if (value === null || value === undefined) {
    return "-";
  }
  return value.toFixed(1);
}

export function roleLabel(role: string): string {
  if (role === "patient_actor") {
    return "Patient";
  }
  if (role === "health_ai") {
    return "Assistant";
  }
  return role;
}

function regexEscape(text: string): string {
  return text.replace(/[.*+?^${}()|[\]\\]/g, "\\$&");
}

/**
 * Escape a transcript turn and wrap each occurrence of an extracted
 * candidate in <mark>. Matching is case-insensitive and happens after
 * escaping both sides, so markup in the transcript stays inert.
 */
export function highlightCandidates(text: string, candidates: readonly string[]): string {
  const escaped = escapeHtml(text);
  const usable = candidates.map((c) => c.trim()).filter((c) => c.length > 0);
  if (usable.length === 0) {
    return escaped;
  }
  const alternatives = usable
    .slice()
    .sort((a, b) => b.length - a.length)
    .map((c) => regexEscape(escapeHtml(c)))
    .join("|");
  const pattern = new RegExp(alternatives, "gi");
  return escaped.replace(pattern, (m) => `<mark>${m}</mark>`);
}

/** Time remaining on a lease as m:ss, or "expired". */
export function leaseCountdown(expiresAtSeconds: number, nowMs: number): string {
  const remaining = Math.floor(expiresAtSeconds - nowMs / 1000);
  if (remaining <= 0) {
    return "expired";
  }
  const minutes = Math.floor(remaining / 60);
  const seconds = remaining % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}
