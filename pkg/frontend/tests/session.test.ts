import { describe, expect, it } from 'vitest';

import { Score, SessionClient } from '../src/api.js';
import { RatingSession } from '../src/session.js';
import { MockServer, makeTasks } from './mock_server.js';

function setup(n = 4) {
  const server = new MockServer(makeTasks(n));
  const client = new SessionClient('', server.fetch);
  const session = new RatingSession(client, 'rater');
  return { server, session };
}

describe('RatingSession', () => {
  it('starts with zero progress and the first task', async () => {
    const { session } = setup();
    const view = await session.start();
    expect(view.progress).toEqual({ done: 0, total: 4 });
    expect(view.currentTask?.sequence_index).toBe(0);
    expect(view.exhausted).toBe(false);
  });

  it('advances and counts on a valid rating', async () => {
    const { server, session } = setup();
    await session.start();
    const view = await session.submit('A');
    expect(view.progress.done).toBe(1);
    expect(view.currentTask?.sequence_index).toBe(1);
    expect(server.posted).toHaveLength(1);
    expect(server.posted[0]).toMatchObject({ rater_id: 'rater', score: 'A' });
  });

  it('shows the completion state after the last task', async () => {
    const { session } = setup(2);
    await session.start();
    await session.submit('B');
    const view = await session.submit('C');
    expect(view.exhausted).toBe(true);
    expect(view.currentTask).toBeNull();
    expect(view.progress.done).toBe(2);
  });

  it('skips forward on 409 without re-sending', async () => {
    const { server, session } = setup();
    const view0 = await session.start();
    server.markRatedExternally(view0.currentTask!.task_id);
    const view = await session.submit('A');
    expect(view.currentTask?.sequence_index).toBe(1);
    expect(server.posted).toHaveLength(0); // nothing persisted for the dup
    expect(view.lastError).toBeNull();
  });

  it('surfaces 400 without advancing', async () => {
    const { server, session } = setup();
    await session.start();
    const view = await session.submit('E' as Score);
    expect(view.lastError).toMatch(/invalid score/);
    expect(view.currentTask?.sequence_index).toBe(0);
    expect(server.posted).toHaveLength(0);
  });

  it('never submits the same task twice', async () => {
    const { server, session } = setup();
    await session.start();
    await session.submit('E' as Score); // rejected locally, stays on task 0
    await session.submit('A');
    await session.submit('B');
    expect(server.posted.map((p) => p.task_id)).toEqual([
      'rater:0000',
      'rater:0001',
    ]);
    expect(new Set(server.posted.map((p) => p.task_id)).size).toBe(2);
  });

  it('guards against concurrent double submission', async () => {
    const { server, session } = setup();
    await session.start();
    const [a, b] = await Promise.all([session.submit('A'), session.submit('A')]);
    expect(server.posted).toHaveLength(1);
    expect([a.progress.done, b.progress.done]).toContain(1);
  });

  it('keeps state and reports the error on network failure', async () => {
    const { server, session } = setup();
    await session.start();
    const before = session.view();
    server.failNext = true;
    const view = await session.submit('A');
    expect(view.lastError).toMatch(/network error/);
    expect(view.currentTask).toEqual(before.currentTask);
    expect(view.progress.done).toBe(before.progress.done);
    // retry succeeds once the network is back
    const retried = await session.submit('A');
    expect(retried.progress.done).toBe(1);
  });

  it('retry after failed advance leaves progress intact', async () => {
    const { server, session } = setup();
    await session.start();
    server.failNext = true;
    const failed = await session.advance();
    expect(failed.lastError).toMatch(/network error/);
    const retried = await session.advance();
    expect(retried.lastError).toBeNull();
    expect(retried.currentTask?.sequence_index).toBe(0);
  });
});
