// Session state machine: one rater working through a seeded stimulus order.
//
// Invariants enforced here rather than in the DOM layer: a score outside
// A-D is never submitted, no task is ever submitted twice, and submission
// is re-entrancy-guarded so a double click cannot double-send.

import { ApiError, Progress, RatingTask, SCORES, Score, SessionClient } from './api.js';

export interface SessionView {
  raterId: string;
  currentTask: RatingTask | null;
  progress: Progress;
  lastError: string | null;
  exhausted: boolean;
  busy: boolean;
}

export class RatingSession {
  private currentTask: RatingTask | null = null;
  private progress: Progress = { done: 0, total: 0 };
  private lastError: string | null = null;
  private exhausted = false;
  private busy = false;
  private readonly submitted = new Set<string>();

  constructor(
    private readonly client: SessionClient,
    readonly raterId: string,
  ) {}

  view(): SessionView {
    return {
      raterId: this.raterId,
      currentTask: this.currentTask,
      progress: { ...this.progress },
      lastError: this.lastError,
      exhausted: this.exhausted,
      busy: this.busy,
    };
  }

  /** Load progress and the first stimulus. */
  async start(): Promise<SessionView> {
    try {
      this.progress = await this.client.progress(this.raterId);
      await this.advance();
    } catch (err) {
      this.lastError = describe(err);
    }
    return this.view();
  }

  /** Fetch the next stimulus; on network failure the state is unchanged. */
  async advance(): Promise<SessionView> {
    try {
      const task = await this.client.nextTask(this.raterId);
      this.currentTask = task;
      this.exhausted = task === null;
      this.lastError = null;
    } catch (err) {
      this.lastError = describe(err);
    }
    return this.view();
  }

  /**
   * Submit a rating for the current task and move on.
   *
   * 201 advances and bumps progress; 409 (already rated elsewhere) skips
   * forward without counting; other rejections surface without advancing.
   */
  async submit(score: Score): Promise<SessionView> {
    if (this.busy || this.currentTask === null) return this.view();
    if (!SCORES.includes(score)) {
      this.lastError = `invalid score ${String(score)}`;
      return this.view();
    }
    const task = this.currentTask;
    if (this.submitted.has(task.task_id)) {
      this.lastError = 'task already submitted';
      return this.view();
    }
    this.busy = true;
    try {
      await this.client.submit(task.task_id, this.raterId, score);
      this.submitted.add(task.task_id);
      this.progress = { ...this.progress, done: this.progress.done + 1 };
      await this.advance();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.submitted.add(task.task_id); // someone already rated it; skip
        await this.advance();
      } else {
        this.lastError = describe(err);
      }
    } finally {
      this.busy = false;
    }
    return this.view();
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return `network error: ${err.message}`;
  return String(err);
}
