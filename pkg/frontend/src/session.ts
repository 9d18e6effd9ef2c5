/**
 * Queue-traversal controller behind the review page.
 *
 * The service is the single source of truth: decisions are applied
 * optimistically to the local queue, rolled back when the service
 * reports a conflict (item already decided elsewhere), and held in an
 * unsent queue when the service is unreachable so nothing is lost. The
 * UI layer renders `state()` and calls the action methods; nothing here
 * touches the DOM.
 */

import { ConflictError, ReviewApi } from './api.js';
import type { DecisionAction, DecisionBody, ItemView, Stats } from './types.js';

export type DecideOutcome = 'applied' | 'conflict' | 'queued';

export interface PendingDecision {
  itemId: string;
  body: DecisionBody;
}

export interface SessionState {
  items: ItemView[];
  cursor: number;
  current: ItemView | null;
  stats: Stats | null;
  banner: string | null;
  unsent: PendingDecision[];
  progress: { decided: number; total: number };
}

export function canDecide(item: ItemView): boolean {
  // both verifier verdicts and scores must be on screen before the
  // decision controls unlock
  return (
    item.verifier_records.length === 2 &&
    item.verifier_records.every(
      (record) => (record.verdict === 'PASS' || record.verdict === 'FAIL')
        && Number.isInteger(record.score),
    )
  );
}

export class ReviewSession {
  private items: ItemView[] = [];
  private cursor = 0;
  private stats: Stats | null = null;
  private banner: string | null = null;
  private readonly unsent: PendingDecision[] = [];

  constructor(
    private readonly api: ReviewApi,
    private readonly options: { reviewer?: string; category?: string; pageSize?: number } = {},
  ) {}

  /** Reload queue and stats from the service (the source of truth). */
  async load(): Promise<void> {
    const page = await this.api.listItems({
      status: 'pending',
      category: this.options.category,
      pageSize: this.options.pageSize ?? 50,
    });
    this.items = page.items;
    this.cursor = Math.min(this.cursor, Math.max(this.items.length - 1, 0));
    this.stats = await this.api.stats();
    this.banner = null;
  }

  state(): SessionState {
    const byStatus = this.stats?.by_status ?? {};
    const decided =
      (byStatus['accepted'] ?? 0) + (byStatus['rejected'] ?? 0) + (byStatus['edited'] ?? 0);
    return {
      items: this.items,
      cursor: this.cursor,
      current: this.items[this.cursor] ?? null,
      stats: this.stats,
      banner: this.banner,
      unsent: [...this.unsent],
      progress: { decided, total: this.stats?.total ?? 0 },
    };
  }

  skip(): void {
    if (this.items.length) this.cursor = (this.cursor + 1) % this.items.length;
  }

  previous(): void {
    if (this.items.length) {
      this.cursor = (this.cursor - 1 + this.items.length) % this.items.length;
    }
  }

  private removeCurrent(item: ItemView): void {
    this.items = this.items.filter((candidate) => candidate.id !== item.id);
    this.cursor = Math.min(this.cursor, Math.max(this.items.length - 1, 0));
  }

  private restore(item: ItemView): void {
    if (!this.items.some((candidate) => candidate.id === item.id)) {
      this.items.splice(Math.min(this.cursor, this.items.length), 0, item);
    }
  }

  /**
   * Decide the current item. Optimistic: the item leaves the local queue
   * immediately; a conflict rolls the view back to service truth, an
   * unreachable service queues the decision for a later flush.
   */
  async decide(
    action: DecisionAction,
    payload: Omit<DecisionBody, 'action'> = {},
  ): Promise<DecideOutcome> {
    const item = this.items[this.cursor];
    if (!item) throw new Error('no item under cursor');
    if (!canDecide(item)) {
      throw new Error('decision controls are locked until both verifier records are shown');
    }
    const body: DecisionBody = { action, reviewer: this.options.reviewer ?? '', ...payload };
    this.removeCurrent(item);
    try {
      await this.api.decide(item.id, body);
    } catch (error) {
      if (error instanceof ConflictError) {
        this.banner = `conflict: ${error.message}`;
        await this.refreshAfterConflict(item.id);
        return 'conflict';
      }
      // unreachable or 5xx: hold the decision client-side, nothing is lost
      this.unsent.push({ itemId: item.id, body });
      this.banner = `service unreachable; ${this.unsent.length} decision(s) queued for retry`;
      return 'queued';
    }
    this.stats = await this.fetchStatsQuietly();
    return 'applied';
  }

  private async refreshAfterConflict(itemId: string): Promise<void> {
    try {
      const fresh = await this.api.getItem(itemId);
      if (fresh.status === 'pending') this.restore(fresh);
      this.stats = await this.fetchStatsQuietly();
    } catch {
      // refresh failure leaves the banner in place; next load() recovers
    }
  }

  private async fetchStatsQuietly(): Promise<Stats | null> {
    try {
      return await this.api.stats();
    } catch {
      return this.stats;
    }
  }

  /** Retry queued decisions in order; stops at the first network failure. */
  async flush(): Promise<{ sent: number; conflicts: number; remaining: number }> {
    let sent = 0;
    let conflicts = 0;
    while (this.unsent.length) {
      const next = this.unsent[0]!;
      try {
        await this.api.decide(next.itemId, next.body);
        sent += 1;
      } catch (error) {
        if (error instanceof ConflictError) {
          conflicts += 1; // decided elsewhere meanwhile; drop ours
        } else {
          break;
        }
      }
      this.unsent.shift();
    }
    if (!this.unsent.length && (sent || conflicts)) {
      this.banner = conflicts ? `${conflicts} queued decision(s) hit conflicts` : null;
      this.stats = await this.fetchStatsQuietly();
    }
    return { sent, conflicts, remaining: this.unsent.length };
  }

  exportAccepted(path: string) {
    return this.api.exportAccepted(path);
  }
}
