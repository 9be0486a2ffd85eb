// Thin typed client over the documented HTTP API. Every console behavior
// goes through these calls or the event stream in sse.ts - nothing private.

import type {
  LatencyReportRow,
  MatchEventView,
  QueryResult,
  TopicInfo,
  TranscriptMessage,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // fall through with the status text
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  createSession(topology?: string): Promise<{ session_id: string; topology: string }> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify(topology ? { topology } : {}),
    });
  }

  query(sessionId: string, text: string): Promise<QueryResult> {
    return this.request(`/sessions/${sessionId}/query`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  async transcript(sessionId: string): Promise<TranscriptMessage[]> {
    const body = await this.request<{ messages: TranscriptMessage[] }>(
      `/sessions/${sessionId}/transcript`,
    );
    return body.messages;
  }

  async topics(): Promise<TopicInfo[]> {
    const body = await this.request<{ topics: TopicInfo[] }>("/topics");
    return body.topics;
  }

  ingestTopic(
    topic: string,
    options: { level?: number; frames?: number; resolution?: string; seed?: number } = {},
  ): Promise<{ topic: string; frame_count: number }> {
    return this.request(`/topics/${topic}/ingest`, {
      method: "POST",
      body: JSON.stringify(options),
    });
  }

  async subscribe(
    query: string,
    topics: string[],
    cadenceFrames = 48,
    capacity = 16,
  ): Promise<string> {
    const body = await this.request<{ subscription_id: string }>("/subscriptions", {
      method: "POST",
      body: JSON.stringify({
        query,
        topics,
        cadence_frames: cadenceFrames,
        capacity,
      }),
    });
    return body.subscription_id;
  }

  fetchMatches(
    subscriptionId: string,
    max = 10,
  ): Promise<{ matches: MatchEventView[]; drops: number }> {
    return this.request(`/subscriptions/${subscriptionId}/matches?max=${max}`);
  }

  unsubscribe(subscriptionId: string): Promise<{ ok: boolean }> {
    return this.request(`/subscriptions/${subscriptionId}`, { method: "DELETE" });
  }

  metrics(groupBy: string): Promise<{
    rows: Array<{ group: string; runs: number; stats: Record<string, Record<string, number>> }>;
  }> {
    return this.request(`/metrics/reports?group_by=${groupBy}`);
  }
}

export type { LatencyReportRow };
