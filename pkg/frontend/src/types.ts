/**
 * Types mirroring the review service's HTTP JSON payloads. The UI never
 * reshapes item text outside the edit form; these are the wire shapes.
 */

export interface VerifierRecord {
  verdict: 'PASS' | 'FAIL';
  checklist: Record<string, boolean>;
  issues: string[];
  score: number;
  parse_failure: string;
}

export type ReviewStatus = 'pending' | 'accepted' | 'rejected' | 'edited';

export interface ItemView {
  id: string;
  evaluation_name: string;
  question: string;
  reference_answer: string;
  category: string | null;
  leaf: string | null;
  seed_excerpt: string;
  verifier_records: VerifierRecord[];
  status: ReviewStatus;
  decision: Record<string, unknown>;
}

export interface ItemPage {
  total: number;
  page: number;
  page_size: number;
  items: ItemView[];
}

export interface Stats {
  total: number;
  by_status: Record<string, number>;
  by_leaf: Record<string, number>;
  by_category: Record<string, number>;
}

export type DecisionAction = 'accept' | 'reject' | 'edit';

export interface DecisionBody {
  action: DecisionAction;
  note?: string;
  edited_question?: string;
  edited_reference_answer?: string;
  reviewer?: string;
}

export interface ExportSummary {
  exported: number;
  per_category: Record<string, number>;
  warnings: string[];
}
