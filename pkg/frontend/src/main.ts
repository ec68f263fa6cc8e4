import { SessionClient } from './api.js';
import { RatingApp } from './app.js';

function raterId(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('rater');
  if (fromQuery) {
    window.localStorage.setItem('scanres-rater', fromQuery);
    return fromQuery;
  }
  const stored = window.localStorage.getItem('scanres-rater');
  if (stored) return stored;
  const entered = window.prompt('Rater id:') || `rater-${Date.now()}`;
  window.localStorage.setItem('scanres-rater', entered);
  return entered;
}

const app = new RatingApp(document, new SessionClient(''), raterId());
void app.start();
