import { renderApp } from './render.js';
import { Store } from './state.js';

const store = new Store();

function mount(): void {
  const root = document.querySelector<HTMLDivElement>('#app');
  if (root === null) throw new Error('missing #app container');

  store.subscribe((state) => {
    root.innerHTML = renderApp(state);
    // feedback buttons are disabled while a mutation is in flight
    if (state.busy) {
      root
        .querySelectorAll<HTMLButtonElement>('button[data-action="like"],button[data-action="dislike"]')
        .forEach((b) => (b.disabled = true));
    }
  });

  root.addEventListener('click', (event) => {
    const target = (event.target as HTMLElement).closest('button');
    if (target === null) return;
    const action = target.dataset.action;
    if (action === 'why' && target.dataset.item) {
      void store.selectItem(target.dataset.item);
    } else if ((action === 'like' || action === 'dislike') && target.dataset.feature) {
      void store.sendFeedback(target.dataset.feature, action);
    } else if (action === 'contrastive') {
      void store.loadContrastive();
    } else if (action === 'retry') {
      void store.openSession();
    }
  });

  root.addEventListener('change', (event) => {
    const select = event.target as HTMLSelectElement;
    if (select.dataset.picker === 'user') {
      void store.selectUser(select.value);
    } else if (select.dataset.factor) {
      void store.selectCondition(select.dataset.factor, select.value);
    }
  });

  void store.init();
}

mount();
