import { afterEach, describe, expect, it, vi } from 'vitest';
import { ApiError, AuditApi } from '../src/api';

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('AuditApi', () => {
  it('requests the next item with rater and bearer token', async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ done: false, progress: { judged: 0, total: 8 }, item: null }),
    );
    vi.stubGlobal('fetch', fetchMock);
    const api = new AuditApi('http://localhost:9999/', 'sekrit');
    await api.nextItem('batch-1', 'rater-a');

    const [url, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe('http://localhost:9999/api/batches/batch-1/next?rater=rater-a');
    expect((init.headers as Record<string, string>)['Authorization']).toBe('Bearer sekrit');
  });

  it('posts judgments as JSON', async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ stored: true, judgment: {} }));
    vi.stubGlobal('fetch', fetchMock);
    const api = new AuditApi('http://localhost:9999');
    await api.submitJudgment('b', {
      passage_id: 'p1',
      valid: false,
      error_classes: ['relevance_argument'],
      notes: '',
      rater_id: 'r',
    });

    const [url, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe('http://localhost:9999/api/batches/b/judgments');
    expect(init.method).toBe('POST');
    const body = JSON.parse(init.body as string);
    expect(body.error_classes).toEqual(['relevance_argument']);
  });

  it('surfaces 422 details as ApiError', async () => {
    vi.stubGlobal(
      'fetch',
      vi.fn(async () => jsonResponse({ detail: 'an invalid judgment requires...' }, 422)),
    );
    const api = new AuditApi('http://x');
    await expect(
      api.submitJudgment('b', {
        passage_id: 'p1',
        valid: false,
        error_classes: [],
        notes: '',
        rater_id: 'r',
      }),
    ).rejects.toSatisfy((error: unknown) => {
      expect(error).toBeInstanceOf(ApiError);
      expect((error as ApiError).status).toBe(422);
      expect((error as ApiError).detail).toMatch(/invalid judgment/);
      return true;
    });
  });

  it('parses NDJSON exports', async () => {
    const lines =
      '{"passage_id": "a", "valid": true}\n{"passage_id": "b", "valid": false}\n';
    vi.stubGlobal(
      'fetch',
      vi.fn(async () => new Response(lines, { status: 200 })),
    );
    const api = new AuditApi('http://x');
    const records = await api.exportBatch('b');
    expect(records).toHaveLength(2);
    expect(records[1].passage_id).toBe('b');
  });
});
