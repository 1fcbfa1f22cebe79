// API base URL, overridable at build/deploy time by defining ARGREC_API_BASE
// on globalThis (e.g. an inline <script> before the bundle, or the test setup).
export function apiBase(): string {
  const override = (globalThis as Record<string, unknown>)['ARGREC_API_BASE'];
  return typeof override === 'string' ? override : 'http://127.0.0.1:8000';
}
