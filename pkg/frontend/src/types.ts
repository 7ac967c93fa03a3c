// Wire types for the audit adjudication API.

export type ErrorClass = 'relevance_argument' | 'incorrect_interpretation';

export const ERROR_CLASSES: readonly ErrorClass[] = [
  'relevance_argument',
  'incorrect_interpretation',
];

export const ERROR_CLASS_LABELS: Record<ErrorClass, string> = {
  relevance_argument: 'Meta-discussion (MD)',
  incorrect_interpretation: 'Misinterpretation (MI)',
};

export interface BatchSummary {
  batch_id: string;
  code_id: string;
  total: number;
  judged: number;
}

export interface CodeView {
  title: string;
  definition: string;
  factors: string[];
  exclusions: string[];
}

export interface AuditItemView {
  batch_id: string;
  passage_id: string;
  code_id: string;
  passage_body: string;
  code: CodeView;
  rationale: string;
  basis_notice: string;
}

export interface Progress {
  judged: number;
  total: number;
}

export interface NextItemResponse {
  done: boolean;
  progress: Progress;
  item: AuditItemView | null;
}

export interface JudgmentSubmission {
  passage_id: string;
  valid: boolean;
  error_classes: ErrorClass[];
  notes: string;
  rater_id: string;
}

export interface StoredJudgment {
  batch_id: string;
  passage_id: string;
  code_id: string;
  valid: boolean;
  error_classes: string[];
  notes: string;
  rater_id: string;
  created_at: string;
}

export interface ErrorRateRow {
  code_id: string;
  md_rate: number;
  mi_rate: number;
  total_rate: number;
  n: number;
}
