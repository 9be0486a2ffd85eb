// Minimal server-sent-events reader over fetch + ReadableStream, so the
// same code runs in browsers and in Node test processes.

export interface StreamHandlers {
  onEvent: (event: string, data: unknown) => void;
  onStatus?: (status: "open" | "closed" | "error") => void;
}

export interface StreamHandle {
  close(): void;
  done: Promise<void>;
}

export function parseSseChunk(
  buffer: string,
  emit: (event: string, data: string) => void,
): string {
  // Events are separated by a blank line; returns the unconsumed tail.
  let rest = buffer;
  for (;;) {
    const split = rest.indexOf("\n\n");
    if (split < 0) return rest;
    const block = rest.slice(0, split);
    rest = rest.slice(split + 2);
    let event = "message";
    const dataLines: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith("event: ")) event = line.slice(7).trim();
      else if (line.startsWith("data: ")) dataLines.push(line.slice(6));
    }
    if (dataLines.length > 0) emit(event, dataLines.join("\n"));
  }
}

export function streamEvents(
  url: string,
  handlers: StreamHandlers,
  fetchFn: (url: string, init?: RequestInit) => Promise<Response> = (u, i) => fetch(u, i),
): StreamHandle {
  const controller = new AbortController();
  const done = (async () => {
    const response = await fetchFn(url, { signal: controller.signal });
    if (!response.ok || response.body === null) {
      handlers.onStatus?.("error");
      return;
    }
    handlers.onStatus?.("open");
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    try {
      for (;;) {
        const { done: finished, value } = await reader.read();
        if (finished) break;
        buffer += decoder.decode(value, { stream: true });
        buffer = parseSseChunk(buffer, (event, data) => {
          let parsed: unknown = data;
          try {
            parsed = JSON.parse(data);
          } catch {
            // keep the raw string
          }
          handlers.onEvent(event, parsed);
        });
      }
      handlers.onStatus?.("closed");
    } catch (error) {
      if (controller.signal.aborted) handlers.onStatus?.("closed");
      else handlers.onStatus?.("error");
    }
  })().catch(() => handlers.onStatus?.("error"));
  return {
    close: () => controller.abort(),
    done,
  };
}
