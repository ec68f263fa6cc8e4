// Typed client for the rating service HTTP API.

export type Score = 'A' | 'B' | 'C' | 'D';

export const SCORES: readonly Score[] = ['A', 'B', 'C', 'D'];

export interface RatingTask {
  task_id: string;
  region_id: string;
  dpi: number;
  stimulus: string;
  sequence_index: number;
  total: number;
  reference?: string;
}

export interface Progress {
  done: number;
  total: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class SessionClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** Next unrated stimulus for this rater, or null when exhausted (204). */
  async nextTask(raterId: string): Promise<RatingTask | null> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/session/${encodeURIComponent(raterId)}/next`,
    );
    if (res.status === 204) return null;
    if (!res.ok) throw new ApiError(res.status, `next failed (${res.status})`);
    return (await res.json()) as RatingTask;
  }

  async submit(taskId: string, raterId: string, score: Score): Promise<void> {
    const res = await this.fetchFn(`${this.baseUrl}/api/ratings`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ task_id: taskId, rater_id: raterId, score }),
    });
    if (res.status !== 201) {
      throw new ApiError(res.status, `rating rejected (${res.status})`);
    }
  }

  async progress(raterId: string): Promise<Progress> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/progress/${encodeURIComponent(raterId)}`,
    );
    if (!res.ok) throw new ApiError(res.status, `progress failed (${res.status})`);
    return (await res.json()) as Progress;
  }

  stimulusUrl(task: RatingTask): string {
    return `${this.baseUrl}${task.stimulus}`;
  }
}
