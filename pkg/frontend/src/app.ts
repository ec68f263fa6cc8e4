// DOM layer: renders the current SessionView and forwards user input.

import { SCORES, Score, SessionClient } from './api.js';
import { RatingSession, SessionView } from './session.js';

export const SCORE_LABELS: Record<Score, string> = {
  A: 'Visually Pleasant',
  B: 'Visually Okay',
  C: 'Visually Okay with Some Artifacts',
  D: 'Visually Unacceptable',
};

export class RatingApp {
  private readonly session: RatingSession;
  private readonly elems: {
    stimulus: HTMLImageElement;
    meta: HTMLElement;
    progress: HTMLElement;
    banner: HTMLElement;
    done: HTMLElement;
    buttons: Map<Score, HTMLButtonElement>;
  };

  constructor(
    private readonly doc: Document,
    private readonly client: SessionClient,
    raterId: string,
  ) {
    this.session = new RatingSession(client, raterId);
    this.elems = this.buildDom(raterId);
  }

  async start(): Promise<void> {
    this.render(await this.session.start());
  }

  /** Exposed for tests; the UI routes all input through here. */
  async rate(score: Score): Promise<SessionView> {
    this.setButtonsEnabled(false); // guard against double clicks
    const view = await this.session.submit(score);
    this.render(view);
    return view;
  }

  /** Re-fetch the current stimulus after a network failure. */
  async retry(): Promise<SessionView> {
    const view = await this.session.advance();
    this.render(view);
    return view;
  }

  private buildDom(raterId: string) {
    const doc = this.doc;
    const root = doc.getElementById('app') ?? doc.body;
    root.innerHTML = '';

    const progress = el(doc, 'div', 'progress');
    const meta = el(doc, 'div', 'meta');
    const banner = el(doc, 'div', 'banner hidden');

    const figure = el(doc, 'div', 'stimulus-box');
    const stimulus = doc.createElement('img');
    stimulus.className = 'stimulus';
    stimulus.alt = 'stimulus';
    // pixel-exact display: once decoded, lock CSS size to the natural size
    stimulus.addEventListener('load', () => {
      if (stimulus.naturalWidth > 0) {
        stimulus.style.width = `${stimulus.naturalWidth}px`;
        stimulus.style.height = `${stimulus.naturalHeight}px`;
      }
    });
    figure.appendChild(stimulus);

    const choices = el(doc, 'div', 'choices');
    const buttons = new Map<Score, HTMLButtonElement>();
    for (const score of SCORES) {
      const button = doc.createElement('button');
      button.className = 'choice';
      button.dataset.score = score;
      button.textContent = `${score} — ${SCORE_LABELS[score]}`;
      button.addEventListener('click', () => void this.rate(score));
      choices.appendChild(button);
      buttons.set(score, button);
    }

    const done = el(doc, 'div', 'done hidden');
    done.textContent = 'Session complete — every stimulus has been rated. Thank you!';

    const hint = el(doc, 'div', 'hint');
    hint.textContent = `Rater: ${raterId} · keys A/B/C/D rate the image`;

    root.append(progress, banner, figure, choices, done, meta, hint);

    doc.addEventListener('keydown', (event: KeyboardEvent) => {
      const key = event.key.toUpperCase();
      if ((SCORES as readonly string[]).includes(key)) {
        void this.rate(key as Score);
      } else if (key === 'R') {
        void this.retry();
      }
    });
    banner.addEventListener('click', () => void this.retry());

    return { stimulus, meta, progress, banner, done, buttons };
  }

  private render(view: SessionView): void {
    const { stimulus, meta, progress, banner, done } = this.elems;
    progress.textContent = `${view.progress.done} / ${view.progress.total} rated`;

    if (view.lastError) {
      banner.textContent = `${view.lastError} — press R to retry`;
      banner.classList.remove('hidden');
    } else {
      banner.classList.add('hidden');
    }

    if (view.exhausted) {
      done.classList.remove('hidden');
      stimulus.classList.add('hidden');
      meta.textContent = '';
      this.setButtonsEnabled(false);
      return;
    }

    if (view.currentTask) {
      stimulus.classList.remove('hidden');
      stimulus.src = this.client.stimulusUrl(view.currentTask);
      meta.textContent = `stimulus ${view.currentTask.sequence_index + 1} of ${view.currentTask.total}`;
      this.setButtonsEnabled(!view.busy);
    }
  }

  private setButtonsEnabled(enabled: boolean): void {
    for (const button of this.elems.buttons.values()) button.disabled = !enabled;
  }
}

function el(doc: Document, tag: string, className: string): HTMLElement {
  const node = doc.createElement(tag);
  node.className = className;
  return node;
}
