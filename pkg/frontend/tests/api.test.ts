import { describe, expect, it } from 'vitest';

import { ConflictError, NotFoundError, ReviewApi, ServiceError } from '../src/api.js';
import type { FetchLike } from '../src/api.js';

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

function recordingFetch(responses: Response[]): { fetchImpl: FetchLike; calls: { url: string; init?: RequestInit }[] } {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    calls.push({ url, init });
    const next = responses.shift();
    if (!next) throw new TypeError('fetch failed');
    return next;
  };
  return { fetchImpl, calls };
}

describe('ReviewApi', () => {
  it('lists items with query parameters', async () => {
    const { fetchImpl, calls } = recordingFetch([
      jsonResponse({ total: 0, page: 2, page_size: 10, items: [] }),
    ]);
    const api = new ReviewApi('http://svc.test', { fetchImpl });
    await api.listItems({ status: 'pending', category: 'tools', page: 2, pageSize: 10 });
    const url = new URL(calls[0]!.url);
    expect(url.pathname).toBe('/api/items');
    expect(url.searchParams.get('status')).toBe('pending');
    expect(url.searchParams.get('category')).toBe('tools');
    expect(url.searchParams.get('page')).toBe('2');
    expect(url.searchParams.get('page_size')).toBe('10');
  });

  it('posts decisions as JSON', async () => {
    const { fetchImpl, calls } = recordingFetch([jsonResponse({ id: 'x', status: 'accepted' })]);
    const api = new ReviewApi('http://svc.test', { fetchImpl });
    await api.decide('item a', { action: 'accept', note: 'ok' });
    expect(calls[0]!.url).toBe('http://svc.test/api/items/item%20a/decision');
    expect(calls[0]!.init?.method).toBe('POST');
    expect(JSON.parse(String(calls[0]!.init?.body))).toEqual({ action: 'accept', note: 'ok' });
  });

  it('maps 409 to ConflictError with the service detail', async () => {
    const { fetchImpl } = recordingFetch([
      jsonResponse({ detail: 'item qa-1 is accepted, not pending' }, 409),
    ]);
    const api = new ReviewApi('http://svc.test', { fetchImpl });
    await expect(api.decide('qa-1', { action: 'accept' })).rejects.toThrowError(ConflictError);
  });

  it('maps 404 and other errors distinctly', async () => {
    const { fetchImpl } = recordingFetch([
      jsonResponse({ detail: 'unknown item zz' }, 404),
      jsonResponse({ detail: 'boom' }, 500),
    ]);
    const api = new ReviewApi('http://svc.test', { fetchImpl });
    await expect(api.getItem('zz')).rejects.toThrowError(NotFoundError);
    await expect(api.getItem('zz')).rejects.toThrowError(ServiceError);
  });

  it('sends the bearer token when configured', async () => {
    const { fetchImpl, calls } = recordingFetch([
      jsonResponse({ total: 0, by_status: {}, by_leaf: {}, by_category: {} }),
    ]);
    const api = new ReviewApi('http://svc.test', { fetchImpl, token: 'sekrit' });
    await api.stats();
    expect((calls[0]!.init?.headers as Record<string, string>)['Authorization']).toBe('Bearer sekrit');
  });
});
