// Fetch client for the audit adjudication API. The server is the source of
// truth; this client carries no state beyond connection settings.

import type {
  BatchSummary,
  ErrorRateRow,
  JudgmentSubmission,
  NextItemResponse,
  StoredJudgment,
} from './types';

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }
}

async function detailOf(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (typeof body?.detail === 'string') return body.detail;
    return JSON.stringify(body);
  } catch {
    return response.statusText;
  }
}

export class AuditApi {
  private readonly baseUrl: string;
  private readonly token: string;

  constructor(baseUrl: string, token = '') {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
    this.token = token;
  }

  private headers(json = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers['Content-Type'] = 'application/json';
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    return headers;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, { headers: this.headers() });
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    return (await response.json()) as T;
  }

  listBatches(): Promise<BatchSummary[]> {
    return this.get<BatchSummary[]>('/api/batches');
  }

  nextItem(batchId: string, rater: string): Promise<NextItemResponse> {
    const query = new URLSearchParams({ rater });
    return this.get<NextItemResponse>(
      `/api/batches/${encodeURIComponent(batchId)}/next?${query}`,
    );
  }

  async submitJudgment(
    batchId: string,
    body: JudgmentSubmission,
  ): Promise<{ stored: boolean; judgment: StoredJudgment }> {
    const response = await fetch(
      `${this.baseUrl}/api/batches/${encodeURIComponent(batchId)}/judgments`,
      { method: 'POST', headers: this.headers(true), body: JSON.stringify(body) },
    );
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    return (await response.json()) as { stored: boolean; judgment: StoredJudgment };
  }

  async exportBatch(batchId: string): Promise<StoredJudgment[]> {
    const response = await fetch(
      `${this.baseUrl}/api/batches/${encodeURIComponent(batchId)}/export`,
      { headers: this.headers() },
    );
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    const text = await response.text();
    return text
      .split('\n')
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as StoredJudgment);
  }

  async exportBatchRaw(batchId: string): Promise<string> {
    const response = await fetch(
      `${this.baseUrl}/api/batches/${encodeURIComponent(batchId)}/export`,
      { headers: this.headers() },
    );
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    return response.text();
  }

  async errorRates(): Promise<ErrorRateRow[]> {
    const payload = await this.get<{ rows: ErrorRateRow[] }>('/api/tables/error-rates');
    return payload.rows;
  }
}
