import type { AppState } from './state.js';
import type { Explanation, RankedItem, TafExport } from './types.js';

// Pure HTML-string renderers. Every number on screen comes straight from an
// API field; the only arithmetic here is formatting and bar sizing.

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

const POLARITY_LABEL: Record<string, string> = {
  '+': 'support',
  '-': 'attack',
  '0': 'neutral',
};

function fmt(value: number): string {
  return value.toFixed(3);
}

export function renderErrorBanner(error: string | null): string {
  if (error === null) return '';
  return `
    <div class="error-banner" role="alert">
      <span>${escapeHtml(error)}</span>
      <button data-action="retry">Retry</button>
    </div>`;
}

export function renderContextPickers(state: AppState): string {
  if (state.meta === null) return '';
  const users = state.meta.users
    .map(
      (u) =>
        `<option value="${escapeHtml(u)}"${u === state.user ? ' selected' : ''}>${escapeHtml(u)}</option>`,
    )
    .join('');
  const factors = Object.entries(state.meta.factors)
    .map(([factor, conditions]) => {
      const options = conditions
        .map(
          (c) =>
            `<option value="${escapeHtml(c)}"${state.context[factor] === c ? ' selected' : ''}>${escapeHtml(c)}</option>`,
        )
        .join('');
      return `
        <label class="picker">${escapeHtml(factor)}
          <select data-factor="${escapeHtml(factor)}">${options}</select>
        </label>`;
    })
    .join('');
  return `
    <div class="pickers">
      <label class="picker">user
        <select data-picker="user">${users}</select>
      </label>
      ${factors}
    </div>`;
}

export function renderRecommendations(items: RankedItem[], moved: string[] = []): string {
  if (items.length === 0) {
    return '<p class="empty-state">No candidate items for this session.</p>';
  }
  const shown = items.filter((i) => i.scenario !== 'not_recommended');
  const hidden = items.filter((i) => i.scenario === 'not_recommended');
  const card = (entry: RankedItem, rank: number) => `
    <div class="item-card${moved.includes(entry.item) ? ' moved' : ''}"
         data-item="${escapeHtml(entry.item)}">
      <span class="rank">#${rank + 1}</span>
      <span class="item-name">${escapeHtml(entry.item)}</span>
      <span class="scenario scenario-${escapeHtml(entry.scenario)}">${escapeHtml(entry.scenario.replace(/_/g, ' '))}</span>
      <span class="rating">${fmt(entry.rating)}</span>
      <button data-action="why" data-item="${escapeHtml(entry.item)}">why?</button>
    </div>`;
  const visible = shown.map((entry) => card(entry, items.indexOf(entry))).join('');
  const collapsed =
    hidden.length === 0
      ? ''
      : `
    <details class="not-recommended">
      <summary>${hidden.length} not recommended</summary>
      ${hidden.map((entry) => card(entry, items.indexOf(entry))).join('')}
    </details>`;
  return `<div class="recommendations">${visible}${collapsed}</div>`;
}

export function renderTafPanel(taf: TafExport | null, explanation: Explanation | null): string {
  if (taf === null) {
    return '<p class="empty-state">Pick an item to see why.</p>';
  }
  const maxStrength = Math.max(...taf.arguments.map((a) => Math.abs(a.strength)), 1e-9);
  const rows = [...taf.arguments]
    .sort((a, b) => Math.abs(b.weight * b.strength) - Math.abs(a.weight * a.strength))
    .map((arg) => {
      const width = Math.round((Math.abs(arg.strength) / maxStrength) * 100);
      const side = arg.strength >= 0 ? 'bar-positive' : 'bar-negative';
      return `
      <div class="argument-row" data-feature="${escapeHtml(arg.feature)}">
        <span class="feature">${escapeHtml(arg.feature)} <em>(${escapeHtml(arg.type)})</em></span>
        <span class="badge badge-${POLARITY_LABEL[arg.polarity]}">${POLARITY_LABEL[arg.polarity]}</span>
        <span class="bar-track"><span class="bar ${side}" style="width:${width}%"></span></span>
        <span class="strength">${fmt(arg.strength)}</span>
        <span class="weight">w=${fmt(arg.weight)}</span>
        <button data-action="like" data-feature="${escapeHtml(arg.feature)}">like</button>
        <button data-action="dislike" data-feature="${escapeHtml(arg.feature)}">dislike</button>
      </div>`;
    })
    .join('');
  const contextBits = Object.entries(taf.context)
    .map(([factor, condition]) => `${escapeHtml(factor)}=${escapeHtml(condition)}`)
    .join(', ');
  const textBlock =
    explanation === null ? '' : `<p class="explanation-text">${escapeHtml(explanation.text)}</p>`;
  return `
    <div class="taf-panel" data-item="${escapeHtml(taf.item)}">
      <h3>${escapeHtml(taf.item)}
        <span class="headline-strength">${fmt(taf.rec_strength)}</span>
      </h3>
      <p class="context-line">${contextBits}</p>
      ${textBlock}
      ${rows}
    </div>`;
}

export function renderContrastive(doc: Explanation | null): string {
  if (doc === null || doc.contrast === undefined) return '';
  const c = doc.contrast;
  const footnote = c.cross_type_fallback
    ? '<p class="footnote">compared across types</p>'
    : '';
  return `
    <div class="contrastive-panel">
      <div class="contrast-cards">
        <div class="contrast-card contrast-rec">
          <h4>${escapeHtml(c.recommended)}</h4>
          <p class="rating">${fmt(c.recommended_rating)}</p>
          <p class="highlight">${escapeHtml(c.preferred_feature)} <em>(${escapeHtml(c.preferred_type)})</em></p>
        </div>
        <div class="contrast-card contrast-con">
          <h4>${escapeHtml(c.rejected)}</h4>
          <p class="rating">${fmt(c.rejected_rating)}</p>
          <p class="highlight">${escapeHtml(c.contrasted_feature)}</p>
        </div>
      </div>
      <p class="contrastive-sentence">${escapeHtml(doc.text)}</p>
      ${footnote}
    </div>`;
}

export function renderApp(state: AppState): string {
  return `
    ${renderErrorBanner(state.error)}
    <header>
      <h1>Why this pick?</h1>
      ${renderContextPickers(state)}
      <button data-action="contrastive" ${state.recommendations.length < 2 ? 'disabled' : ''}>
        Compare best vs worst
      </button>
    </header>
    <main>
      <section class="left">${renderRecommendations(state.recommendations, state.movedItems)}</section>
      <section class="right">
        ${renderTafPanel(state.taf, state.explanation)}
        ${renderContrastive(state.contrastive)}
      </section>
    </main>`;
}
