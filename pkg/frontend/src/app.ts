/**
 * DOM wiring for the review page. All state lives in ReviewSession; this
 * module renders it and translates keystrokes/clicks into session calls.
 *
 * The API base is configurable via the `?api=` query parameter and
 * defaults to the page's own origin.
 */

import { ReviewApi } from './api.js';
import { actionForKey } from './keyboard.js';
import { renderMarkdown, escapeHtml } from './markdown.js';
import { canDecide, ReviewSession } from './session.js';
import type { ItemView } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function verifierPanel(item: ItemView): string {
  return item.verifier_records
    .map((record, index) => {
      const issues = record.issues.length
        ? `<ul>${record.issues.map((issue) => `<li>${escapeHtml(issue)}</li>`).join('')}</ul>`
        : '<p class="muted">no issues</p>';
      const verdictClass = record.verdict === 'PASS' ? 'pass' : 'fail';
      return `
        <div class="verifier">
          <h4>Verifier ${index + 1}
            <span class="verdict ${verdictClass}">${record.verdict}</span>
            <span class="score">score ${record.score}</span>
          </h4>
          ${issues}
        </div>`;
    })
    .join('');
}

function render(session: ReviewSession): void {
  const state = session.state();
  const banner = el<HTMLDivElement>('banner');
  banner.textContent = state.banner ?? '';
  banner.style.display = state.banner ? 'block' : 'none';

  const progress = el<HTMLDivElement>('progress');
  const { decided, total } = state.progress;
  progress.textContent = total ? `${decided}/${total} decided` : 'queue empty';
  el<HTMLProgressElement>('progress-bar').value = total ? decided / total : 0;
  el<HTMLSpanElement>('queue-count').textContent = String(state.items.length);

  const item = state.current;
  const container = el<HTMLDivElement>('item');
  const controls = el<HTMLDivElement>('controls');
  if (!item) {
    container.innerHTML = '<p class="muted">No pending items. Press g to reload.</p>';
    controls.classList.add('locked');
    return;
  }
  const badge = item.category ? `${item.category}/${item.leaf}` : 'uncategorized';
  container.innerHTML = `
    <div class="item-head">
      <span class="badge">${escapeHtml(badge)}</span>
      <span class="muted">${escapeHtml(item.evaluation_name)} · ${escapeHtml(item.id)}</span>
    </div>
    <h3>Question</h3>
    <div class="markdown">${renderMarkdown(item.question)}</div>
    <h3>Reference Answer</h3>
    <div class="markdown">${renderMarkdown(item.reference_answer)}</div>
    <h3>Seed Excerpt</h3>
    <div class="markdown seed">${renderMarkdown(item.seed_excerpt || '(none)')}</div>
    <h3>Verifier Records</h3>
    <div class="verifiers">${verifierPanel(item)}</div>`;
  controls.classList.toggle('locked', !canDecide(item));
}

function openEditForm(item: ItemView): void {
  el<HTMLDivElement>('edit-form').style.display = 'block';
  el<HTMLTextAreaElement>('edit-question').value = item.question;
  el<HTMLTextAreaElement>('edit-reference').value = item.reference_answer;
}

export async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const api = new ReviewApi(params.get('api') ?? window.location.origin, {
    token: params.get('token') ?? undefined,
  });
  const session = new ReviewSession(api, {
    reviewer: params.get('reviewer') ?? 'reviewer',
    category: params.get('category') ?? undefined,
  });

  const act = async (name: string): Promise<void> => {
    const state = session.state();
    switch (name) {
      case 'accept':
      case 'reject':
        if (state.current && canDecide(state.current)) {
          await session.decide(name, { note: '' });
        }
        break;
      case 'edit':
        if (state.current && canDecide(state.current)) openEditForm(state.current);
        return; // render after submit/cancel
      case 'skip':
        session.skip();
        break;
      case 'previous':
        session.previous();
        break;
      case 'flush':
        await session.flush();
        break;
      case 'reload':
        await session.load();
        break;
      default:
        return;
    }
    render(session);
  };

  document.addEventListener('keydown', (event) => {
    const action = actionForKey(event.key, (event.target as HTMLElement)?.tagName ?? '');
    if (action) void act(action);
  });
  for (const name of ['accept', 'reject', 'skip', 'edit', 'flush', 'reload']) {
    el<HTMLButtonElement>(`btn-${name}`).addEventListener('click', () => void act(name));
  }
  el<HTMLButtonElement>('edit-submit').addEventListener('click', async () => {
    el<HTMLDivElement>('edit-form').style.display = 'none';
    await session.decide('edit', {
      edited_question: el<HTMLTextAreaElement>('edit-question').value,
      edited_reference_answer: el<HTMLTextAreaElement>('edit-reference').value,
    });
    render(session);
  });
  el<HTMLButtonElement>('edit-cancel').addEventListener('click', () => {
    el<HTMLDivElement>('edit-form').style.display = 'none';
  });

  await session.load();
  render(session);
}

if (typeof document !== 'undefined' && document.getElementById('item')) {
  void start();
}
