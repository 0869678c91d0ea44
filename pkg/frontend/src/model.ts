// Client-side view state: the session snapshot plus stream deduplication.

import type { InterventionView, SessionView, StreamMessage } from "./api.js";

export type Role = "tenant" | "engineer";

export class ConsoleViewModel {
  lastSeq = 0;
  role: Role = "tenant";
  feed: StreamMessage[] = [];
  interventions = new Map<string, InterventionView>();
  anomalies: Array<Record<string, unknown>> = [];
  session: SessionView | null = null;
  dropped = 0; // duplicates / out-of-order messages ignored

  /** Apply one stream message; false when it was a duplicate or stale. */
  apply(message: StreamMessage): boolean {
    if (message.seq <= this.lastSeq) {
      this.dropped += 1;
      return false;
    }
    this.lastSeq = message.seq;
    this.feed.push(message);
    if (message.type === "anomaly") {
      this.anomalies.push(message["anomaly"] as Record<string, unknown>);
    } else if (message.type === "intervention") {
      const view = message["intervention"] as InterventionView;
      this.interventions.set(view.id, view);
    } else if (message.type === "answer") {
      const id = message["intervention_id"] as string;
      const view = this.interventions.get(id);
      if (view) {
        view.state = "answered";
        view.answer = message["answer"];
      }
    }
    return true;
  }

  /** Authoritative snapshot wins over optimistic stream-derived state. */
  reconcile(session: SessionView): void {
    this.session = session;
    for (const view of session.pending_interventions) {
      this.interventions.set(view.id, view);
    }
    this.lastSeq = Math.max(this.lastSeq, session.seq);
  }

  pendingForRole(): InterventionView[] {
    return [...this.interventions.values()]
      .filter((view) => view.role === this.role)
      .sort((a, b) => a.id.localeCompare(b.id));
  }

  quiescent(): boolean {
    return this.session?.quiescent ?? true;
  }

  traceIds(): string[] {
    const ids: string[] = [];
    for (const message of this.feed) {
      const trace = message["trace"] as { id?: string } | null | undefined;
      if (message.type === "outcome" && trace && trace.id && !ids.includes(trace.id)) {
        ids.push(trace.id);
      }
    }
    return ids;
  }
}
