// Typed client for the intervention service. The console talks to nothing else.

export type AnswerSchema = {
  type: "boolean" | "integer" | "choice" | "acknowledgement" | "text";
  min?: number;
  max?: number;
  options?: string[];
};

export interface ExplanationView {
  observability: string;
  transparency: string;
  feedforward: string | null;
  intelligibility: string | null;
}

export interface InterventionView {
  id: string;
  role: "tenant" | "engineer";
  key: string;
  question: string;
  answer_schema: AnswerSchema;
  explanation: ExplanationView;
  created_at: number;
  context: Record<string, unknown>;
  state: "pending" | "answered" | "expired";
  answer: unknown;
}

export interface ControlView {
  id: string;
  constraint: string;
  sustainability: string;
  origin: string;
}

export interface SessionView {
  scenario: string;
  now: number;
  loop_phase: string;
  open_anomalies: Array<Record<string, unknown>>;
  pending_interventions: InterventionView[];
  enacted_controls: ControlView[];
  model_version: number;
  quiescent: boolean;
  seq: number;
  state_hash: string;
}

export interface StreamMessage {
  seq: number;
  at: number;
  type: string;
  [key: string]: unknown;
}

export interface TraceStep {
  t: number;
  action: { name: string; args: string[] };
  added: string[];
  removed: string[];
}

export interface TraceView {
  id: string;
  actions: Array<{ t: number; name: string; args: string[] }>;
  verdict: string;
  violated_at: number | null;
  steps: TraceStep[];
}

export interface AnswerResult {
  ok: boolean;
  status: number;
  body: Record<string, unknown>;
}

export interface WhatIfResult {
  constraint: string;
  eliminates: number;
  breaks: number;
}

export class ServiceClient {
  constructor(readonly base: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, init);
    if (!res.ok) {
      throw new Error(`${path} failed: ${res.status} ${await res.text()}`);
    }
    return (await res.json()) as T;
  }

  state(): Promise<SessionView> {
    return this.json("/state");
  }

  interventions(state = "all"): Promise<InterventionView[]> {
    return this.json(`/interventions?state=${state}`);
  }

  trace(id: string): Promise<TraceView | null> {
    return fetch(`${this.base}/traces/${id}`).then(async (res) =>
      res.ok ? ((await res.json()) as TraceView) : null,
    );
  }

  whatif(constraint: string): Promise<WhatIfResult> {
    return this.json("/whatif", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ constraint }),
    });
  }

  start(name: string): Promise<SessionView> {
    return this.json("/scenario/start", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ name, interactive: true }),
    });
  }

  advance(minutes: number): Promise<SessionView> {
    return this.json("/scenario/advance", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ minutes }),
    });
  }

  // Answers never throw on 409/422: the panel shows those verbatim.
  async answer(id: string, answer: unknown, requestId: string): Promise<AnswerResult> {
    const res = await fetch(`${this.base}/interventions/${id}/answer`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ answer, request_id: requestId }),
    });
    let body: Record<string, unknown> = {};
    try {
      body = (await res.json()) as Record<string, unknown>;
    } catch {
      body = {};
    }
    return { ok: res.ok, status: res.status, body };
  }

  /**
   * Server-sent events over fetch so the same code runs in the browser and
   * under node. Resolves when the stream ends (follow=false) or the signal
   * aborts.
   */
  async subscribe(
    from: number,
    onMessage: (message: StreamMessage) => void,
    options: { follow?: boolean; signal?: AbortSignal } = {},
  ): Promise<void> {
    const follow = options.follow ?? true;
    const res = await fetch(`${this.base}/stream?frm=${from}&follow=${follow}`, {
      headers: { accept: "text/event-stream" },
      signal: options.signal,
    });
    if (!res.ok || !res.body) {
      throw new Error(`stream failed: ${res.status}`);
    }
    const reader = res.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      buffer += decoder.decode(value, { stream: true });
      let boundary;
      while ((boundary = buffer.indexOf("\n\n")) >= 0) {
        const frame = buffer.slice(0, boundary);
        buffer = buffer.slice(boundary + 2);
        const data = frame
          .split("\n")
          .filter((line) => line.startsWith("data: "))
          .map((line) => line.slice(6))
          .join("");
        if (data) {
          onMessage(JSON.parse(data) as StreamMessage);
        }
      }
    }
  }
}
