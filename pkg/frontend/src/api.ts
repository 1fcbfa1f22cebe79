import { apiBase } from './config.js';
import type {
  Explanation,
  FeedbackResponse,
  Meta,
  RankedItem,
  TafExport,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(`${apiBase()}${path}`, {
    headers: { 'Content-Type': 'application/json' },
    ...init,
  });
  if (!resp.ok) {
    let code = 'http_error';
    let message = `${resp.status} ${resp.statusText}`;
    try {
      const body = await resp.json();
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body: keep the status line
    }
    throw new ApiError(resp.status, code, message);
  }
  return (await resp.json()) as T;
}

export function getMeta(): Promise<Meta> {
  return request<Meta>('/meta');
}

export function createSession(
  user: string,
  context: Record<string, string>,
): Promise<{ session_id: string }> {
  return request('/sessions', {
    method: 'POST',
    body: JSON.stringify({ user, context }),
  });
}

export function getRecommendations(sessionId: string, n = 50): Promise<RankedItem[]> {
  return request(`/sessions/${sessionId}/recommendations?n=${n}`);
}

export function getTaf(sessionId: string, item: string): Promise<TafExport> {
  return request(`/sessions/${sessionId}/explanations/${encodeURIComponent(item)}?mode=taf`);
}

export function getTemplateExplanation(
  sessionId: string,
  item: string,
): Promise<Explanation> {
  return request(
    `/sessions/${sessionId}/explanations/${encodeURIComponent(item)}?mode=template`,
  );
}

export function getContrastive(sessionId: string): Promise<Explanation> {
  return request(`/sessions/${sessionId}/explanations/_?mode=contrastive`);
}

export function postFeedback(
  sessionId: string,
  feature: string,
  direction: 'like' | 'dislike',
): Promise<FeedbackResponse> {
  return request(`/sessions/${sessionId}/feedback`, {
    method: 'POST',
    body: JSON.stringify({ feature, direction }),
  });
}
