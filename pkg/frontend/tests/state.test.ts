import { describe, expect, it } from "vitest";

import { SessionView, stripTerminate, toBubble } from "../src/state.js";
import { parseSseChunk } from "../src/sse.js";
import type { LatencyReportRow, TranscriptMessage } from "../src/types.js";

const demoMessages: TranscriptMessage[] = [
  { round: 0, sender: "Admin", content: "What is happening in the video in camera-1?" },
  {
    round: 1,
    sender: "Engineer",
    tool_calls: [{ id: "call_1", name: "kafka_consume", args: { topic: "camera-1" } }],
  },
  {
    round: 2,
    sender: "Admin",
    tool_response: {
      call_id: "call_1",
      value: "demo_videos/Complex_Video.mp4",
      is_error: false,
    },
  },
  { round: 3, sender: "Engineer", content: "TERMINATE" },
];

const report: LatencyReportRow = {
  conversation_id: "c1",
  topology: "2-agent",
  complexity: "",
  resolution: "",
  total_ms: 65,
  model_ms: 35,
  extract_ms: 6,
  create_ms: 5,
  consume_ms: 4,
  overhead_ms: 15,
};

describe("SessionView", () => {
  it("renders messages in transcript order", () => {
    const view = new SessionView();
    for (const message of demoMessages) view.applyEvent("message", message);
    const bubbles = view.bubbles();
    expect(bubbles.map((b) => b.round)).toEqual([0, 1, 2, 3]);
    expect(bubbles[0].kind).toBe("user");
    expect(bubbles[1].kind).toBe("tool-call");
    expect(bubbles[2].kind).toBe("tool-result");
    expect(bubbles[3].kind).toBe("agent");
  });

  it("counts tool-call bubbles", () => {
    const view = new SessionView();
    for (const message of demoMessages) view.applyEvent("message", message);
    expect(view.toolCallBubbleCount()).toBe(1);
  });

  it("waterfall bars sum exactly to the report total", () => {
    const view = new SessionView();
    view.applyEvent("report", report);
    const waterfall = view.waterfall();
    expect(waterfall.bars.map((b) => b.kind)).toEqual([
      "StreamConsume",
      "FrameExtraction",
      "VideoCreation",
      "ModelCall",
      "AgentOverhead",
    ]);
    expect(waterfall.barSumMs).toBeCloseTo(waterfall.reportTotalMs, 6);
    expect(waterfall.reportTotalMs).toBe(65);
  });

  it("live waterfall aggregates streamed spans per kind", () => {
    const view = new SessionView();
    view.applyEvent("span", {
      kind: "ModelCall", start_ms: 0, end_ms: 30, conversation_id: "c",
    });
    view.applyEvent("span", {
      kind: "ModelCall", start_ms: 40, end_ms: 50, conversation_id: "c",
    });
    const waterfall = view.waterfall();
    expect(waterfall.live).toBe(true);
    expect(waterfall.bars).toEqual([{ kind: "ModelCall", ms: 40 }]);
  });

  it("disconnect marks the transcript incomplete until reconciled", () => {
    const view = new SessionView();
    view.markLive();
    view.markDisconnected();
    expect(view.connection).toBe("reconnecting");
    expect(view.incomplete).toBe(true);
    const changed = view.reconcile(demoMessages);
    expect(changed).toBe(true);
    expect(view.incomplete).toBe(false);
    expect(view.messages).toEqual(demoMessages);
  });

  it("reconcile is a no-op when the rendered view already matches", () => {
    const view = new SessionView();
    for (const message of demoMessages) view.applyEvent("message", message);
    expect(view.reconcile(demoMessages)).toBe(false);
  });

  it("error tool responses render as tool-error bubbles", () => {
    const bubble = toBubble({
      round: 2,
      sender: "Admin",
      tool_response: {
        call_id: "call_9",
        value: "tool 'reanalyze' does not exist",
        is_error: true,
      },
    });
    expect(bubble.kind).toBe("tool-error");
    expect(bubble.body).toContain("does not exist");
  });
});

describe("stripTerminate", () => {
  it("removes the trailing keyword", () => {
    expect(stripTerminate("steady flow.TERMINATE")).toBe("steady flow.");
    expect(stripTerminate("All done. TERMINATE")).toBe("All done.");
    expect(stripTerminate("plain text")).toBe("plain text");
  });
});

describe("parseSseChunk", () => {
  it("parses complete event blocks and keeps the tail", () => {
    const seen: Array<[string, string]> = [];
    const tail = parseSseChunk(
      'event: message\ndata: {"round":0}\n\nevent: span\ndata: {"kind":"ModelCall"}\n\nevent: partial\nda',
      (event, data) => seen.push([event, data]),
    );
    expect(seen).toEqual([
      ["message", '{"round":0}'],
      ["span", '{"kind":"ModelCall"}'],
    ]);
    expect(tail).toBe("event: partial\nda");
  });

  it("joins multi-line data", () => {
    const seen: Array<[string, string]> = [];
    parseSseChunk("event: message\ndata: one\ndata: two\n\n", (e, d) => seen.push([e, d]));
    expect(seen).toEqual([["message", "one\ntwo"]]);
  });
});
