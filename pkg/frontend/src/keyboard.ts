/** Keyboard-driven queue traversal: one keystroke per reviewer action. */

export type KeyAction =
  | 'accept'
  | 'reject'
  | 'skip'
  | 'previous'
  | 'edit'
  | 'flush'
  | 'reload';

const KEYMAP: Record<string, KeyAction> = {
  a: 'accept',
  r: 'reject',
  s: 'skip',
  ArrowRight: 'skip',
  ArrowLeft: 'previous',
  e: 'edit',
  f: 'flush',
  g: 'reload',
};

/** Map a keyboard event to a review action; typing in form fields never
 * triggers queue actions. */
export function actionForKey(key: string, targetTag = ''): KeyAction | null {
  if (targetTag === 'INPUT' || targetTag === 'TEXTAREA' || targetTag === 'SELECT') {
    return null;
  }
  return KEYMAP[key] ?? null;
}
