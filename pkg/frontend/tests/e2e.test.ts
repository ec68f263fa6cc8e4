// Scripted session against a live `scanres serve` instance.
//
// Drives the same client/session code the browser app uses: rate 10
// stimuli A-D, then check the server ledger holds exactly those records in
// presentation order and that an invalid score is rejected and not
// persisted.

import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, readFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { Score, SessionClient } from '../src/api.js';
import { RatingSession } from '../src/session.js';

const PORT = 18473;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let ratingsPath: string;

async function serverUp(): Promise<boolean> {
  try {
    const res = await fetch(`${BASE}/api/progress/boot`);
    return res.ok;
  } catch {
    return false;
  }
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), 'scanres-e2e-'));
  execFileSync('python3', [
    '-m', 'scanres.cli', 'synth',
    '--n', '4', '--size', '48', '--seed', '17', '--out', join(dir, 'corpus'),
  ]);
  ratingsPath = join(dir, 'ratings.jsonl');
  server = spawn('python3', [
    '-m', 'scanres.cli', 'serve',
    '--manifest', join(dir, 'corpus', 'manifest.json'),
    '--ratings-out', ratingsPath,
    '--port', String(PORT),
    '--seed', '23',
  ], { stdio: 'ignore' });
  for (let i = 0; i < 100; i++) {
    if (await serverUp()) return;
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error('serve did not come up');
}, 30_000);

afterAll(() => {
  server?.kill();
});

describe('live rating session', () => {
  it('persists 10 ratings in presentation order and rejects bad scores', async () => {
    const client = new SessionClient(BASE);
    const session = new RatingSession(client, 'scripted');
    let view = await session.start();
    expect(view.progress).toEqual({ done: 0, total: 16 });

    const scores: Score[] = ['A', 'B', 'C', 'D'];
    const presented: Array<{ region: string; dpi: number; score: Score }> = [];
    for (let i = 0; i < 10; i++) {
      expect(view.currentTask).not.toBeNull();
      const task = view.currentTask!;
      // the stimulus endpoint serves a decodable PNG for every task
      const png = await fetch(client.stimulusUrl(task));
      expect(png.status).toBe(200);
      expect(png.headers.get('content-type')).toBe('image/png');

      const score = scores[i % 4];
      presented.push({ region: task.region_id, dpi: task.dpi, score });
      view = await session.submit(score);
      expect(view.lastError).toBeNull();
      expect(view.progress.done).toBe(i + 1);
    }

    // ledger: exactly 10 well-formed records, in presentation order
    const lines = readFileSync(ratingsPath, 'utf-8').trim().split('\n');
    expect(lines).toHaveLength(10);
    lines.forEach((line, i) => {
      const record = JSON.parse(line);
      expect(record).toMatchObject({
        region_id: presented[i].region,
        dpi: presented[i].dpi,
        rater_id: 'scripted',
        score: presented[i].score,
      });
      expect(typeof record.timestamp).toBe('string');
      expect(new Date(record.timestamp).toString()).not.toBe('Invalid Date');
    });

    // invalid score is rejected with 400 and nothing is persisted
    const bad = await fetch(`${BASE}/api/ratings`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        task_id: view.currentTask!.task_id,
        rater_id: 'scripted',
        score: 'E',
      }),
    });
    expect(bad.status).toBe(400);
    const after = readFileSync(ratingsPath, 'utf-8').trim().split('\n');
    expect(after).toHaveLength(10);

    // server-side progress agrees with the client's view
    const progress = await client.progress('scripted');
    expect(progress).toEqual({ done: 10, total: 16 });
  }, 60_000);

  it('duplicate submission is a 409 and the session skips forward', async () => {
    const client = new SessionClient(BASE);
    const session = new RatingSession(client, 'scripted');
    const view = await session.start();
    const task = view.currentTask!;
    // submit once directly, then through the session: the session sees 409
    const first = await fetch(`${BASE}/api/ratings`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        task_id: task.task_id, rater_id: 'scripted', score: 'A',
      }),
    });
    expect(first.status).toBe(201);
    const next = await session.submit('B');
    expect(next.lastError).toBeNull();
    expect(next.currentTask?.task_id).not.toBe(task.task_id);
    // the duplicate B was not persisted
    const lines = readFileSync(ratingsPath, 'utf-8').trim().split('\n');
    const forTask = lines.map((l) => JSON.parse(l)).filter(
      (r) => r.region_id === task.region_id && r.dpi === task.dpi,
    );
    expect(forTask).toHaveLength(1);
    expect(forTask[0].score).toBe('A');
  }, 60_000);
});
