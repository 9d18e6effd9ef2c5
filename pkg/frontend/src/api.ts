/**
 * Thin client for the review service HTTP JSON API. The base URL is
 * configurable so the statically served page can point anywhere; a 409
 * from the service surfaces as ConflictError so callers can roll back
 * optimistic updates.
 */

import type {
  DecisionBody,
  ExportSummary,
  ItemPage,
  ItemView,
  Stats,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ConflictError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = 'ConflictError';
  }
}

export class NotFoundError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = 'NotFoundError';
  }
}

export class ServiceError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
    this.name = 'ServiceError';
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  if (response.status === 409) throw new ConflictError(detail);
  if (response.status === 404) throw new NotFoundError(detail);
  throw new ServiceError(response.status, detail);
}

export class ReviewApi {
  private readonly fetchImpl: FetchLike;
  private readonly headers: Record<string, string>;

  constructor(
    public readonly baseUrl: string,
    options: { fetchImpl?: FetchLike; token?: string } = {},
  ) {
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
    this.headers = { 'Content-Type': 'application/json' };
    if (options.token) this.headers['Authorization'] = `Bearer ${options.token}`;
  }

  private url(path: string, params?: Record<string, string | number | undefined>): string {
    const url = new URL(path, this.baseUrl);
    for (const [key, value] of Object.entries(params ?? {})) {
      if (value !== undefined) url.searchParams.set(key, String(value));
    }
    return url.toString();
  }

  private async get<T>(path: string, params?: Record<string, string | number | undefined>): Promise<T> {
    const response = await this.fetchImpl(this.url(path, params), { headers: this.headers });
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(this.url(path), {
      method: 'POST',
      headers: this.headers,
      body: JSON.stringify(body),
    });
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  listItems(options: {
    status?: string;
    category?: string;
    page?: number;
    pageSize?: number;
  } = {}): Promise<ItemPage> {
    return this.get<ItemPage>('/api/items', {
      status: options.status ?? 'pending',
      category: options.category,
      page: options.page ?? 1,
      page_size: options.pageSize ?? 20,
    });
  }

  getItem(id: string): Promise<ItemView> {
    return this.get<ItemView>(`/api/items/${encodeURIComponent(id)}`);
  }

  decide(id: string, body: DecisionBody): Promise<ItemView> {
    return this.post<ItemView>(`/api/items/${encodeURIComponent(id)}/decision`, body);
  }

  stats(): Promise<Stats> {
    return this.get<Stats>('/api/stats');
  }

  exportAccepted(path: string): Promise<ExportSummary> {
    return this.post<ExportSummary>('/api/export', { path });
  }
}
