// App wiring: one session tab = one view model + one event-stream
// connection with automatic resume through the transcript endpoint.

import { ApiClient } from "./api.js";
import {
  renderAnswer,
  renderBubbles,
  renderInbox,
  renderStatus,
  renderTopics,
  renderWaterfall,
} from "./render.js";
import { SessionView } from "./state.js";
import { streamEvents, type StreamHandle } from "./sse.js";

const api = new ApiClient("");
const view = new SessionView();

let stream: StreamHandle | null = null;
let subscriptionId = "";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function redraw(): void {
  renderBubbles(byId("chat"), view.bubbles());
  renderAnswer(byId("answer"), view);
  renderWaterfall(byId("waterfall"), view.waterfall());
  renderStatus(byId("status"), view);
}

function connectStream(): void {
  stream?.close();
  view.connection = "connecting";
  renderStatus(byId("status"), view);
  stream = streamEvents(`/sessions/${view.sessionId}/events`, {
    onEvent: (event, data) => {
      view.applyEvent(event, data);
      redraw();
    },
    onStatus: (status) => {
      if (status === "open") view.markLive();
      else view.markDisconnected();
      renderStatus(byId("status"), view);
      if (status !== "open") {
        // Rotate the stream and reconcile whatever the gap lost.
        setTimeout(() => {
          void resume();
          connectStream();
        }, 500);
      }
    },
  });
}

async function resume(): Promise<void> {
  const messages = await api.transcript(view.sessionId);
  view.reconcile(messages);
  redraw();
}

async function sendQuery(): Promise<void> {
  const input = byId<HTMLInputElement>("query-input");
  const text = input.value.trim();
  if (!text || view.busy) return;
  view.input = "";
  input.value = "";
  view.busy = true;
  view.resetForNewQuery();
  try {
    const result = await api.query(view.sessionId, text);
    view.answer = result.answer;
    view.report = result.report;
  } catch (error) {
    view.error = String(error);
  } finally {
    view.busy = false;
  }
  await resume();
}

async function refreshTopics(): Promise<void> {
  renderTopics(byId("topics"), await api.topics());
}

async function openInbox(): Promise<void> {
  if (!subscriptionId) {
    const queryText = byId<HTMLInputElement>("sub-query").value.trim();
    const topic = byId<HTMLInputElement>("sub-topic").value.trim() || "camera-1";
    if (!queryText) return;
    subscriptionId = await api.subscribe(queryText, [topic], 12);
    byId("sub-id").textContent = subscriptionId;
  }
  const body = await api.fetchMatches(subscriptionId, 20);
  renderInbox(byId("inbox"), body.matches, body.drops);
}

async function boot(): Promise<void> {
  const topologySelect = byId<HTMLSelectElement>("topology");
  const session = await api.createSession(topologySelect.value);
  view.sessionId = session.session_id;
  view.topology = session.topology;
  byId("session-label").textContent = `${session.session_id} (${session.topology})`;
  connectStream();
  await refreshTopics();
  redraw();
}

byId("send").addEventListener("click", () => void sendQuery());
byId<HTMLInputElement>("query-input").addEventListener("keydown", (event) => {
  if ((event as KeyboardEvent).key === "Enter") void sendQuery();
});
byId("resume").addEventListener("click", () => void resume());
byId("refresh-topics").addEventListener("click", () => void refreshTopics());
byId("open-inbox").addEventListener("click", () => void openInbox());

void boot();
