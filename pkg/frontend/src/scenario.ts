/** Scenario drafts and lossless import/export through the Scenario file
 * schema: {"name": ..., "edits": [{"op": ..., "event": ..., ...}],
 * "horizon": ...}, the exact format the CLI and service accept.
 */

import type { EventSummary } from "./types.js";

export type EditOp = "shift" | "rescale" | "remove" | "set";

export interface ScenarioEdit {
  op: EditOp;
  event: string;
  days?: number;
  factor?: number;
  value?: number;
}

export interface ScenarioFile {
  name: string;
  edits: ScenarioEdit[];
  horizon: number | null;
}

/** Per-event edit state as the UI manipulates it. */
export interface EventEdit {
  event: string;
  enabled: boolean;
  shiftDays: number;
  scale: number;
}

export interface ScenarioDraft {
  baseModelId: string;
  name: string;
  horizon: number | null;
  edits: EventEdit[];
}

export class ScenarioValidationError extends Error {
  constructor(message: string, readonly editIndex: number | null = null) {
    super(message);
    this.name = "ScenarioValidationError";
  }
}

export function neutralDraft(
  baseModelId: string,
  events: EventSummary[],
  name = "draft",
): ScenarioDraft {
  return {
    baseModelId,
    name,
    horizon: null,
    edits: events.map((e) => ({
      event: e.description,
      enabled: true,
      shiftDays: 0,
      scale: 1,
    })),
  };
}

/** Validate a draft against the events it edits; strictness after
 * rescaling must stay in [0, 1]. */
export function validateDraft(
  draft: ScenarioDraft,
  events: EventSummary[],
): void {
  const known = new Map(events.map((e) => [e.description, e]));
  draft.edits.forEach((edit, idx) => {
    const base = known.get(edit.event);
    if (base === undefined) {
      throw new ScenarioValidationError(
        `unknown event "${edit.event}"`, idx);
    }
    if (!Number.isInteger(edit.shiftDays)) {
      throw new ScenarioValidationError(
        `shift must be a whole number of days, got ${edit.shiftDays}`, idx);
    }
    if (!(edit.scale >= 0) || !Number.isFinite(edit.scale)) {
      throw new ScenarioValidationError(
        `scale must be a finite non-negative number, got ${edit.scale}`,
        idx);
    }
    const strictness = base.value * edit.scale;
    if (strictness < 0 || strictness > 1) {
      throw new ScenarioValidationError(
        `scaled strictness ${strictness.toFixed(3)} outside [0, 1]`, idx);
    }
  });
  if (draft.horizon !== null &&
      (!Number.isInteger(draft.horizon) || draft.horizon < 1)) {
    throw new ScenarioValidationError(
      `horizon must be a positive integer or null, got ${draft.horizon}`);
  }
}

/** Compile a draft to the Scenario file schema. Neutral edits (enabled,
 * no shift, scale 1) produce no entries, so an untouched draft is the
 * null scenario. */
export function draftToScenario(draft: ScenarioDraft): ScenarioFile {
  const edits: ScenarioEdit[] = [];
  for (const edit of draft.edits) {
    if (!edit.enabled) {
      edits.push({ op: "remove", event: edit.event });
      continue;
    }
    if (edit.shiftDays !== 0) {
      edits.push({ op: "shift", event: edit.event, days: edit.shiftDays });
    }
    if (edit.scale !== 1) {
      edits.push({ op: "rescale", event: edit.event, factor: edit.scale });
    }
  }
  return { name: draft.name, edits, horizon: draft.horizon };
}

const OP_FIELDS: Record<EditOp, "days" | "factor" | "value" | null> = {
  shift: "days",
  rescale: "factor",
  set: "value",
  remove: null,
};

function canonicalEdit(edit: ScenarioEdit): Record<string, unknown> {
  const out: Record<string, unknown> = { op: edit.op, event: edit.event };
  const extra = OP_FIELDS[edit.op];
  if (extra !== null) {
    out[extra] = edit[extra];
  }
  return out;
}

/** Canonical serialization: fixed key order, 1-space indent. Exporting an
 * imported file reproduces the original bytes. */
export function exportScenario(file: ScenarioFile): string {
  const payload = {
    name: file.name,
    edits: file.edits.map(canonicalEdit),
    horizon: file.horizon,
  };
  return JSON.stringify(payload, null, 1) + "\n";
}

function asEdit(raw: unknown, idx: number): ScenarioEdit {
  if (typeof raw !== "object" || raw === null) {
    throw new ScenarioValidationError(`edit ${idx} is not an object`, idx);
  }
  const rec = raw as Record<string, unknown>;
  const op = rec["op"];
  if (op !== "shift" && op !== "rescale" && op !== "remove" &&
      op !== "set") {
    throw new ScenarioValidationError(
      `edit ${idx} has unknown op ${JSON.stringify(op)}`, idx);
  }
  if (typeof rec["event"] !== "string") {
    throw new ScenarioValidationError(
      `edit ${idx} is missing an event name`, idx);
  }
  const edit: ScenarioEdit = { op, event: rec["event"] };
  const extra = OP_FIELDS[op];
  if (extra !== null) {
    const val = rec[extra];
    if (typeof val !== "number" || !Number.isFinite(val)) {
      throw new ScenarioValidationError(
        `edit ${idx} (${op}) needs a numeric "${extra}"`, idx);
    }
    edit[extra] = val;
  }
  return edit;
}

export function importScenario(text: string): ScenarioFile {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (exc) {
    throw new ScenarioValidationError(`not valid JSON: ${exc}`);
  }
  if (typeof raw !== "object" || raw === null) {
    throw new ScenarioValidationError("scenario file must be an object");
  }
  const rec = raw as Record<string, unknown>;
  if (typeof rec["name"] !== "string") {
    throw new ScenarioValidationError('scenario needs a string "name"');
  }
  const editsRaw = rec["edits"] ?? [];
  if (!Array.isArray(editsRaw)) {
    throw new ScenarioValidationError('"edits" must be an array');
  }
  const horizon = rec["horizon"] ?? null;
  if (horizon !== null &&
      (typeof horizon !== "number" || !Number.isInteger(horizon))) {
    throw new ScenarioValidationError('"horizon" must be an integer or null');
  }
  return {
    name: rec["name"],
    edits: editsRaw.map(asEdit),
    horizon,
  };
}
