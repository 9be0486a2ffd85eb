// End-to-end console test against a scripted-backend server process.
// Covers the full operator path: appendix demo query (tool bubbles, answer,
// waterfall annotation) and the destructive subscription inbox.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionView } from "../src/state.js";
import { streamEvents, type StreamHandle } from "../src/sse.js";

const PORT = 8 * 1000 + 731 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;

async function waitFor(
  predicate: () => boolean | Promise<boolean>,
  timeoutMs = 15_000,
  stepMs = 100,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    if (await predicate()) return;
    if (Date.now() > deadline) throw new Error("timed out waiting for condition");
    await new Promise((resolve) => setTimeout(resolve, stepMs));
  }
}

async function serverUp(): Promise<boolean> {
  try {
    const response = await fetch(`${BASE}/topics`);
    return response.ok;
  } catch {
    return false;
  }
}

beforeAll(async () => {
  const workspace = mkdtempSync(join(tmpdir(), "console-e2e-"));
  // Scripted backend: the bundled demo flow plus an affirmative answer for
  // the subscription query, so the inbox has something to buffer.
  const scriptPath = join(workspace, "script.jsonl");
  const steps = [
    {
      match: { purpose: "turn", has_attachments: false, last_contains: "red vehicles visible in camera-1" },
      response: { content: "Yes - there are red cars in the camera-1 stream. TERMINATE" },
      delay_ms: 0,
    },
  ];
  const bundled = [
    { match: { purpose: "turn", has_attachments: false, last_contains: "What is happening in the video in camera-1?" },
      response: { tool_calls: [{ name: "kafka_consume", args: { topic: "camera-1" } }] }, delay_ms: 0 },
    { match: { purpose: "turn", has_attachments: false, last_contains: "demo_videos/Complex_Video.mp4" },
      response: { tool_calls: [{ name: "frame_extraction", args: { video_path: "demo_videos/Complex_Video.mp4", sampling: 1, output_root: "extracted_frames/" } }] }, delay_ms: 0 },
    { match: { purpose: "turn", has_attachments: false, last_contains: "extracted_frames/Complex_Video_frames" },
      response: { tool_calls: [{ name: "create_video_from_frames", args: { frames_path: "extracted_frames/Complex_Video_frames", output_video_path: "new_video/Complex_Video_result.mp4", frame_rate: 24 } }] }, delay_ms: 0 },
    { match: { purpose: "turn", has_attachments: false, last_contains: "new_video/Complex_Video_result.mp4" },
      response: { tool_calls: [{ name: "call_model", args: { video_path: "new_video/Complex_Video_result.mp4", user_input: "What is happening in the video in camera-1?" } }] }, delay_ms: 0 },
    { match: { purpose: "turn", has_attachments: false, last_contains: "busy highway" },
      response: { content: "TERMINATE" }, delay_ms: 0 },
    { match: null,
      response: { content: "The frames from the video show a busy highway with multiple lanes of traffic. The vehicles are maintaining a steady flow.TERMINATE" }, delay_ms: 0 },
  ];
  writeFileSync(scriptPath, [...steps, ...bundled].map((record) => JSON.stringify(record)).join("\n") + "\n");
  const configPath = join(workspace, "pipeline.yaml");
  writeFileSync(configPath, [
    "workspace:",
    `  root: ${join(workspace, "ws")}`,
    "gateway:",
    "  backend: scripted",
    `  script: ${scriptPath}`,
    "",
  ].join("\n"));
  server = spawn(
    "python3",
    ["-m", "cepmas.cli", "--config", configPath, "serve",
     "--port", String(PORT), "--demo"],
    { stdio: ["ignore", "pipe", "pipe"], cwd: workspace },
  );
  server.stderr?.on("data", (chunk: Buffer) => {
    const text = chunk.toString();
    if (text.includes("Traceback")) console.error("server:", text);
  });
  await waitFor(serverUp, 20_000, 200);
}, 30_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("console end-to-end against a scripted server", () => {
  it("renders the demo query as tool bubbles, answer and waterfall", async () => {
    const api = new ApiClient(BASE);
    const view = new SessionView();
    const session = await api.createSession("2-agent");
    view.sessionId = session.session_id;

    const stream: StreamHandle = streamEvents(
      `${BASE}/sessions/${view.sessionId}/events`,
      {
        onEvent: (event, data) => view.applyEvent(event, data),
        onStatus: (status) => {
          if (status === "open") view.markLive();
        },
      },
    );
    try {
      const result = await api.query(
        view.sessionId,
        "What is happening in the video in camera-1?",
      );
      view.answer = result.answer;
      view.report = result.report;

      expect(result.answer).toContain("busy highway");
      await waitFor(() => view.messages.length >= 10);

      // Four tool-call bubbles, in toolchain order.
      const bubbles = view.bubbles();
      const toolBubbles = bubbles.filter((b) => b.kind === "tool-call");
      expect(toolBubbles.length).toBe(4);
      expect(toolBubbles.map((b) => b.title)).toEqual([
        "kafka_consume",
        "frame_extraction",
        "create_video_from_frames",
        "call_model",
      ]);

      // Waterfall annotation equals the reported total; model bar dominates
      // no simulated delays here, so just check the sum identity.
      const waterfall = view.waterfall();
      expect(waterfall.live).toBe(false);
      expect(waterfall.barSumMs).toBeCloseTo(waterfall.reportTotalMs, 6);
      expect(waterfall.bars.map((b) => b.kind)).toContain("ModelCall");

      // Span events also arrived over the stream.
      await waitFor(() => view.spans.length >= 4);
      const spanKinds = new Set(view.spans.map((s) => s.kind));
      for (const kind of ["StreamConsume", "FrameExtraction", "VideoCreation",
                          "ModelCall"]) {
        expect(spanKinds.has(kind)).toBe(true);
      }

      // Rendered view reconciles exactly against the transcript endpoint.
      const transcript = await api.transcript(view.sessionId);
      expect(view.reconcile(transcript)).toBe(false);
    } finally {
      stream.close();
    }
  }, 30_000);

  it("inbox lists buffered matches and fetch is destructive", async () => {
    const api = new ApiClient(BASE);
    const subscriptionId = await api.subscribe(
      "Are there any red vehicles visible in camera-1?",
      ["camera-1"],
      4,
    );
    // Push fresh frames so the cadence fires; the serve pump evaluates.
    await api.ingestTopic("camera-1", { level: 3, frames: 8, seed: 21,
                                        label: "Complex_Video" });
    let firstBatch: Awaited<ReturnType<typeof api.fetchMatches>> | null = null;
    await waitFor(async () => {
      firstBatch = await api.fetchMatches(subscriptionId, 10);
      return firstBatch.matches.length > 0;
    }, 20_000, 250);
    expect(firstBatch!.matches.length).toBeGreaterThanOrEqual(1);
    const match = firstBatch!.matches[0];
    expect(match.topic).toBe("camera-1");
    expect(match.answer).toContain("red cars");
    expect(match.seq_span[1]).toBeGreaterThanOrEqual(match.seq_span[0]);

    // Destructive read: the inbox is empty on reopen.
    const second = await api.fetchMatches(subscriptionId, 10);
    expect(second.matches).toEqual([]);
    await api.unsubscribe(subscriptionId);
  }, 30_000);
});
