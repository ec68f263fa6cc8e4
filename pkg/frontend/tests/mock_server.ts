// In-memory stand-in for the rating service, for unit tests.

import { RatingTask } from '../src/api.js';

export class MockServer {
  readonly posted: Array<{ task_id: string; rater_id: string; score: string }> = [];
  private readonly rated = new Set<string>();
  failNext = false;

  constructor(readonly tasks: RatingTask[]) {}

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    if (this.failNext) {
      this.failNext = false;
      throw new TypeError('fetch failed');
    }
    const url = new URL(input, 'http://mock');
    if (url.pathname.endsWith('/next')) {
      const next = this.tasks.find((t) => !this.rated.has(t.task_id));
      if (!next) return new Response(null, { status: 204 });
      return Response.json(next);
    }
    if (url.pathname.endsWith('/api/ratings') && init?.method === 'POST') {
      const body = JSON.parse(String(init.body));
      if (!['A', 'B', 'C', 'D'].includes(body.score)) {
        return Response.json({ error: 'bad score' }, { status: 400 });
      }
      const task = this.tasks.find((t) => t.task_id === body.task_id);
      if (!task) return Response.json({ error: 'unknown' }, { status: 404 });
      if (this.rated.has(task.task_id)) {
        return Response.json({ error: 'dup' }, { status: 409 });
      }
      this.rated.add(task.task_id);
      this.posted.push(body);
      return Response.json({ accepted: true }, { status: 201 });
    }
    if (url.pathname.startsWith('/api/progress/')) {
      return Response.json({ done: this.rated.size, total: this.tasks.length });
    }
    return new Response('not found', { status: 404 });
  };

  markRatedExternally(taskId: string): void {
    this.rated.add(taskId);
  }
}

export function makeTasks(n: number): RatingTask[] {
  return Array.from({ length: n }, (_, i) => ({
    task_id: `rater:${String(i).padStart(4, '0')}`,
    region_id: `r${i}`,
    dpi: [300, 200, 150, 100][i % 4],
    stimulus: `/api/stimulus/rater:${String(i).padStart(4, '0')}`,
    sequence_index: i,
    total: n,
  }));
}
