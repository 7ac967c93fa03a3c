// Client-side mirror of the judgment invariants. The server enforces the
// same rules and answers 422 if a bad combination is forced through.

import type { ErrorClass } from './types';

export interface JudgmentDraft {
  valid: boolean | null;
  errorClasses: ErrorClass[];
  notes: string;
}

export const EMPTY_DRAFT: JudgmentDraft = { valid: null, errorClasses: [], notes: '' };

export type DraftCheck = { ok: true } | { ok: false; reason: string };

export function checkDraft(draft: JudgmentDraft): DraftCheck {
  if (draft.valid === null) {
    return { ok: false, reason: 'Mark the passage valid or invalid first.' };
  }
  if (draft.valid && draft.errorClasses.length > 0) {
    return {
      ok: false,
      reason: 'A valid judgment cannot carry error classes; uncheck them or mark invalid.',
    };
  }
  if (!draft.valid && draft.errorClasses.length === 0) {
    return {
      ok: false,
      reason: 'An invalid judgment needs at least one error class (MD or MI).',
    };
  }
  return { ok: true };
}

export function toggleClass(draft: JudgmentDraft, errorClass: ErrorClass): JudgmentDraft {
  const has = draft.errorClasses.includes(errorClass);
  return {
    ...draft,
    errorClasses: has
      ? draft.errorClasses.filter((c) => c !== errorClass)
      : [...draft.errorClasses, errorClass],
  };
}

export function setValid(draft: JudgmentDraft, valid: boolean): JudgmentDraft {
  return { ...draft, valid };
}
