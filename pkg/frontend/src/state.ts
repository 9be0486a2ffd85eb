// Session view model: transcript mirror, live spans, waterfall math and
// reconnect/reconciliation state. Pure data + methods; DOM code lives in
// render.ts.

import type {
  LatencyReportRow,
  SpanEvent,
  StreamEventName,
  TranscriptMessage,
} from "./types.js";

export type ConnectionState = "idle" | "connecting" | "live" | "reconnecting" | "closed";

export type BubbleKind = "user" | "agent" | "tool-call" | "tool-result" | "tool-error";

export interface Bubble {
  kind: BubbleKind;
  sender: string;
  title: string;
  body: string;
  round: number;
}

export interface WaterfallBar {
  kind: string;
  ms: number;
}

export interface Waterfall {
  bars: WaterfallBar[];
  barSumMs: number; // the visible annotation
  reportTotalMs: number;
  live: boolean;
}

const TOOL_BAR_KINDS: Array<[keyof LatencyReportRow, string]> = [
  ["consume_ms", "StreamConsume"],
  ["extract_ms", "FrameExtraction"],
  ["create_ms", "VideoCreation"],
  ["model_ms", "ModelCall"],
];

export class SessionView {
  sessionId = "";
  topology = "";
  messages: TranscriptMessage[] = [];
  spans: SpanEvent[] = [];
  report: LatencyReportRow | null = null;
  answer = "";
  input = "";
  busy = false;
  connection: ConnectionState = "idle";
  incomplete = false; // a dropped stream may have lost messages
  error = "";

  applyEvent(event: StreamEventName | string, data: unknown): void {
    if (event === "message") {
      this.messages.push(data as TranscriptMessage);
    } else if (event === "span") {
      this.spans.push(data as SpanEvent);
    } else if (event === "report") {
      this.report = data as LatencyReportRow;
    }
    // "timeout" marks a server-side stream rotation; nothing is lost.
  }

  markDisconnected(): void {
    if (this.connection === "live") this.incomplete = true;
    this.connection = "reconnecting";
  }

  markLive(): void {
    this.connection = "live";
  }

  /** Replace the rendered transcript with the server's; clears incomplete. */
  reconcile(serverMessages: TranscriptMessage[]): boolean {
    const changed =
      JSON.stringify(serverMessages) !== JSON.stringify(this.messages);
    this.messages = [...serverMessages];
    this.incomplete = false;
    return changed;
  }

  bubbles(): Bubble[] {
    const userProxy = this.messages.length > 0 ? this.messages[0].sender : "";
    return this.messages.map((message) => toBubble(message, userProxy));
  }

  toolCallBubbleCount(): number {
    return this.bubbles().filter((b) => b.kind === "tool-call").length;
  }

  /**
   * Per-kind latency bars. Once the report lands, the bars come straight
   * from it (four tool kinds plus the derived AgentOverhead), so the
   * annotated bar sum equals the reported total exactly.
   */
  waterfall(): Waterfall {
    if (this.report !== null) {
      const bars: WaterfallBar[] = TOOL_BAR_KINDS.map(([key, kind]) => ({
        kind,
        ms: Number(this.report![key]) || 0,
      }));
      bars.push({ kind: "AgentOverhead", ms: Number(this.report.overhead_ms) || 0 });
      const barSumMs = bars.reduce((acc, bar) => acc + bar.ms, 0);
      return {
        bars,
        barSumMs,
        reportTotalMs: Number(this.report.total_ms) || 0,
        live: false,
      };
    }
    // In-flight view: aggregate streamed spans per kind.
    const sums = new Map<string, number>();
    for (const span of this.spans) {
      sums.set(span.kind, (sums.get(span.kind) ?? 0) + (span.end_ms - span.start_ms));
    }
    const bars = [...sums.entries()].map(([kind, ms]) => ({ kind, ms }));
    const barSumMs = bars.reduce((acc, bar) => acc + bar.ms, 0);
    return { bars, barSumMs, reportTotalMs: barSumMs, live: true };
  }

  resetForNewQuery(): void {
    this.spans = [];
    this.report = null;
    this.answer = "";
    this.error = "";
  }
}

export function toBubble(message: TranscriptMessage, userProxy = ""): Bubble {
  if (message.tool_response !== undefined && message.tool_response !== null) {
    return {
      kind: message.tool_response.is_error ? "tool-error" : "tool-result",
      sender: message.sender,
      title: `result for ${message.tool_response.call_id}`,
      body: message.tool_response.value,
      round: message.round,
    };
  }
  if (message.tool_calls !== undefined && message.tool_calls.length > 0) {
    const call = message.tool_calls[0];
    const extra = message.tool_calls.length > 1
      ? ` (+${message.tool_calls.length - 1} more)`
      : "";
    return {
      kind: "tool-call",
      sender: message.sender,
      title: `${call.name}${extra}`,
      body: message.tool_calls
        .map((c) => `${c.name} ${JSON.stringify(c.args)}`)
        .join("\n"),
      round: message.round,
    };
  }
  return {
    kind: message.sender === userProxy ? "user" : "agent",
    sender: message.sender,
    title: message.sender,
    body: message.content ?? "",
    round: message.round,
  };
}

export function stripTerminate(text: string): string {
  const trimmed = text.trimEnd();
  return trimmed.endsWith("TERMINATE")
    ? trimmed.slice(0, -"TERMINATE".length).trimEnd()
    : trimmed;
}
