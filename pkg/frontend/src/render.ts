// DOM renderers. Each takes the pure view data from state.ts and rebuilds
// one region of the page; nothing here talks to the network.

import type { Bubble, SessionView, Waterfall } from "./state.js";
import { stripTerminate } from "./state.js";
import type { MatchEventView, SceneRecord, TopicInfo } from "./types.js";

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderBubbles(container: HTMLElement, bubbles: Bubble[]): void {
  container.replaceChildren();
  for (const bubble of bubbles) {
    const item = el("div", `bubble bubble-${bubble.kind}`);
    item.appendChild(el("div", "bubble-title", `${bubble.sender} · ${bubble.title}`));
    item.appendChild(el("pre", "bubble-body", stripTerminate(bubble.body)));
    container.appendChild(item);
  }
  container.scrollTop = container.scrollHeight;
}

export function renderAnswer(container: HTMLElement, view: SessionView): void {
  container.replaceChildren();
  if (view.error) {
    container.appendChild(el("div", "answer answer-error", view.error));
  } else if (view.answer) {
    container.appendChild(el("div", "answer", view.answer));
  }
}

export function renderWaterfall(container: HTMLElement, waterfall: Waterfall): void {
  container.replaceChildren();
  const maxMs = Math.max(1, ...waterfall.bars.map((bar) => bar.ms));
  for (const bar of waterfall.bars) {
    const row = el("div", "wf-row");
    row.appendChild(el("span", "wf-kind", bar.kind));
    const track = el("div", "wf-track");
    const fill = el("div", `wf-fill wf-${bar.kind.toLowerCase()}`);
    fill.style.width = `${Math.max(1, (bar.ms / maxMs) * 100)}%`;
    track.appendChild(fill);
    row.appendChild(track);
    row.appendChild(el("span", "wf-ms", `${bar.ms.toFixed(1)} ms`));
    container.appendChild(row);
  }
  const label = waterfall.live ? "live span sum" : "bar sum";
  container.appendChild(
    el(
      "div",
      "wf-sum",
      `${label} = ${waterfall.barSumMs.toFixed(1)} ms · report total = ` +
        `${waterfall.reportTotalMs.toFixed(1)} ms`,
    ),
  );
}

export function renderStatus(container: HTMLElement, view: SessionView): void {
  container.replaceChildren();
  const state = el("span", `status status-${view.connection}`, view.connection);
  container.appendChild(state);
  if (view.incomplete) {
    container.appendChild(
      el("span", "status status-incomplete",
         "transcript may be incomplete — resume to reconcile"),
    );
  }
}

export function renderThumbnail(canvas: HTMLCanvasElement, scene: SceneRecord): void {
  const context = canvas.getContext("2d");
  if (!context) return;
  const backgrounds: Record<string, string> = {
    daylight: "#cfe8ff",
    dusk: "#5b5b7a",
    "bright-lights": "#2b2b4f",
  };
  context.fillStyle = backgrounds[scene.lighting] ?? "#d8d8d8";
  context.fillRect(0, 0, canvas.width, canvas.height);
  const sx = canvas.width / scene.width;
  const sy = canvas.height / scene.height;
  for (const object of scene.objects) {
    context.fillStyle = object.color;
    const w = object.kind === "truck" || object.kind === "bus" ? 14 : 9;
    context.fillRect(object.x * sx, object.y * sy, w, 6);
  }
}

export function renderTopics(container: HTMLElement, topics: TopicInfo[]): void {
  container.replaceChildren();
  for (const topic of topics) {
    const card = el("div", "topic-card");
    card.appendChild(el("div", "topic-name", topic.name));
    card.appendChild(
      el("div", "topic-meta",
         `${topic.frame_count} frames · latest seq ${topic.latest_seq}` +
         (topic.width ? ` · ${topic.width}x${topic.height}` : "")),
    );
    if (topic.thumbnail) {
      const canvas = document.createElement("canvas");
      canvas.width = 160;
      canvas.height = 90;
      canvas.className = "topic-thumb";
      renderThumbnail(canvas, topic.thumbnail);
      card.appendChild(canvas);
    }
    container.appendChild(card);
  }
  if (topics.length === 0) {
    container.appendChild(el("div", "empty", "no topics registered"));
  }
}

export function renderInbox(
  container: HTMLElement,
  matches: MatchEventView[],
  drops: number,
): void {
  container.replaceChildren();
  for (const match of matches) {
    const card = el("div", "match-card");
    card.appendChild(
      el("div", "match-title",
         `${match.topic} frames ${match.seq_span[0]}..${match.seq_span[1]}`),
    );
    card.appendChild(el("div", "match-answer", stripTerminate(match.answer)));
    card.appendChild(
      el("div", "match-meta", `total ${match.report.total_ms.toFixed(1)} ms`),
    );
    container.appendChild(card);
  }
  if (matches.length === 0) {
    container.appendChild(el("div", "empty", "inbox empty (fetch is destructive)"));
  }
  if (drops > 0) {
    container.appendChild(el("div", "match-drops", `${drops} match(es) dropped`));
  }
}
