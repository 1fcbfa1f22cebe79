import * as api from './api.js';
import type { Explanation, Meta, RankedItem, TafExport } from './types.js';

// One store drives the page. Sessions are immutable snapshots of
// (user, context): changing either picker creates a new session. At most one
// mutation is in flight; a failed feedback POST is retried once before the
// error surfaces.

export interface AppState {
  meta: Meta | null;
  user: string | null;
  context: Record<string, string>;
  sessionId: string | null;
  recommendations: RankedItem[];
  selectedItem: string | null;
  taf: TafExport | null;
  explanation: Explanation | null;
  contrastive: Explanation | null;
  movedItems: string[];
  busy: boolean;
  error: string | null;
}

export function initialState(): AppState {
  return {
    meta: null,
    user: null,
    context: {},
    sessionId: null,
    recommendations: [],
    selectedItem: null,
    taf: null,
    explanation: null,
    contrastive: null,
    movedItems: [],
    busy: false,
    error: null,
  };
}

export type Listener = (state: AppState) => void;

export class Store {
  state: AppState = initialState();
  private listeners: Listener[] = [];

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private update(patch: Partial<AppState>): void {
    this.state = { ...this.state, ...patch };
    this.emit();
  }

  async init(): Promise<void> {
    try {
      const meta = await api.getMeta();
      const user = meta.users[0] ?? null;
      const context: Record<string, string> = {};
      for (const [factor, conditions] of Object.entries(meta.factors)) {
        context[factor] = conditions[0];
      }
      this.update({ meta, user, context, error: null });
      if (user !== null) await this.openSession();
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  async selectUser(user: string): Promise<void> {
    this.update({ user });
    await this.openSession();
  }

  async selectCondition(factor: string, condition: string): Promise<void> {
    this.update({ context: { ...this.state.context, [factor]: condition } });
    await this.openSession();
  }

  /** Create the session for the current (user, context) and load its ranking. */
  async openSession(): Promise<void> {
    if (this.state.user === null) return;
    try {
      const { session_id } = await api.createSession(this.state.user, this.state.context);
      this.update({
        sessionId: session_id,
        selectedItem: null,
        taf: null,
        explanation: null,
        contrastive: null,
        movedItems: [],
        error: null,
      });
      await this.refreshRecommendations();
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  async refreshRecommendations(): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      const previous = this.state.recommendations;
      const recommendations = await api.getRecommendations(this.state.sessionId);
      const movedItems = rankChanges(previous, recommendations);
      this.update({ recommendations, movedItems, error: null });
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  async selectItem(item: string): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      const [taf, explanation] = await Promise.all([
        api.getTaf(this.state.sessionId, item),
        api.getTemplateExplanation(this.state.sessionId, item),
      ]);
      this.update({ selectedItem: item, taf, explanation, error: null });
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  async loadContrastive(): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      const contrastive = await api.getContrastive(this.state.sessionId);
      this.update({ contrastive, error: null });
    } catch (err) {
      this.update({ contrastive: null, error: describe(err) });
    }
  }

  /** Send one like/dislike, then re-pull the ranking (and the open TAF panel). */
  async sendFeedback(feature: string, direction: 'like' | 'dislike'): Promise<void> {
    if (this.state.sessionId === null || this.state.busy) return;
    this.update({ busy: true });
    try {
      try {
        await api.postFeedback(this.state.sessionId, feature, direction);
      } catch (first) {
        if (first instanceof api.ApiError && first.status < 500) throw first;
        await api.postFeedback(this.state.sessionId, feature, direction);
      }
      await this.refreshRecommendations();
      if (this.state.selectedItem !== null) {
        await this.selectItem(this.state.selectedItem);
      }
      if (this.state.contrastive !== null) {
        await this.loadContrastive();
      }
    } catch (err) {
      this.update({ error: describe(err) });
    } finally {
      this.update({ busy: false });
    }
  }
}

export function rankChanges(before: RankedItem[], after: RankedItem[]): string[] {
  if (before.length === 0) return [];
  const oldRank = new Map(before.map((entry, rank) => [entry.item, rank]));
  return after
    .filter((entry, rank) => oldRank.has(entry.item) && oldRank.get(entry.item) !== rank)
    .map((entry) => entry.item);
}

function describe(err: unknown): string {
  if (err instanceof api.ApiError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}
