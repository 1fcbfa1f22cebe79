// Payload shapes of the recommendation service API. The UI renders these
// verbatim and never derives model quantities of its own.

export interface Meta {
  variant: string;
  users: string[];
  factors: Record<string, string[]>;
  n_items: number;
  context_required: boolean;
}

export interface RankedItem {
  item: string;
  rating: number;
  scenario: string;
}

export interface TafArgument {
  feature: string;
  type: string;
  polarity: '+' | '-' | '0';
  strength: number;
  weight: number;
}

export interface TafExport {
  item: string;
  rec_strength: number;
  context: Record<string, string>;
  neutral_eps: number;
  arguments: TafArgument[];
}

export interface ExplanationContext {
  factor: string;
  condition: string;
  importance: number;
}

export interface CitedArgument {
  feature: string;
  type: string;
  polarity: string;
  strength: number;
  weight: number;
}

export interface Explanation {
  scenario: string;
  context: ExplanationContext | null;
  arguments: CitedArgument[];
  text: string;
  contrast?: {
    recommended: string;
    rejected: string;
    recommended_rating: number;
    rejected_rating: number;
    preferred_feature: string;
    preferred_type: string;
    contrasted_feature: string;
    cross_type_fallback: boolean;
  };
}

export interface FeedbackResponse {
  updated: { item: string; old_rating: number; new_rating: number }[];
  override: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
