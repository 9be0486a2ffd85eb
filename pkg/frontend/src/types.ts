// Payload shapes of the pipeline's HTTP + event-stream API
// (machine-readable schema: ../api/openapi.json).

export interface ToolCall {
  id: string;
  name: string;
  args: Record<string, unknown>;
}

export interface ToolResponse {
  call_id: string;
  value: string;
  is_error: boolean;
}

export interface TranscriptMessage {
  round: number;
  sender: string;
  content?: string;
  tool_calls?: ToolCall[];
  tool_response?: ToolResponse;
}

export interface LatencyReportRow {
  conversation_id: string;
  topology: string;
  complexity: number | string;
  resolution: string;
  total_ms: number;
  model_ms: number;
  extract_ms: number;
  create_ms: number;
  consume_ms: number;
  overhead_ms: number;
}

export interface SpanEvent {
  kind: string;
  start_ms: number;
  end_ms: number;
  conversation_id: string;
}

export interface SceneObject {
  kind: string;
  color: string;
  x: number;
  y: number;
  heading: number;
}

export interface SceneRecord {
  t_ms: number;
  width: number;
  height: number;
  level: number;
  lighting: string;
  clutter: number;
  viewpoint: string;
  objects: SceneObject[];
}

export interface TopicInfo {
  name: string;
  frame_count: number;
  retained: number;
  latest_seq: number;
  width: number | null;
  height: number | null;
  thumbnail: SceneRecord | null;
}

export interface MatchEventView {
  subscription_id: string;
  answer: string;
  topic: string;
  seq_span: [number, number];
  detected_at_ms: number;
  report: LatencyReportRow;
}

export interface QueryResult {
  answer: string;
  report: LatencyReportRow;
}

export type StreamEventName = "message" | "span" | "report" | "timeout";
