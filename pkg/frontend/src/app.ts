// Console wiring: one stream subscription feeding the view model, panels
// re-rendered on change, answers posted back through the client.

import { ServiceClient, type StreamMessage } from "./api.js";
import { ConsoleViewModel, type Role } from "./model.js";
import { renderFeedItem, renderIntervention, renderTrace, renderWhatIf } from "./panels.js";

export class ConsoleApp {
  readonly client: ServiceClient;
  readonly model = new ConsoleViewModel();
  readonly root: HTMLElement;
  private streamAbort: AbortController | null = null;

  constructor(base: string, root: HTMLElement) {
    this.client = new ServiceClient(base);
    this.root = root;
    this.root.innerHTML = "";
    for (const cls of ["statusbar", "queue", "trace-host", "whatif-host", "feed"]) {
      this.root.appendChild(Object.assign(document.createElement("section"), { className: cls }));
    }
  }

  private host(cls: string): HTMLElement {
    return this.root.querySelector(`.${cls}`) as HTMLElement;
  }

  setRole(role: Role): void {
    this.model.role = role;
    this.renderQueue();
    this.renderStatus();
  }

  /** Pull one authoritative snapshot and re-render everything. */
  async refresh(): Promise<void> {
    this.model.reconcile(await this.client.state());
    this.renderStatus();
    this.renderQueue();
  }

  onMessage(message: StreamMessage): void {
    if (!this.model.apply(message)) {
      return;
    }
    this.host("feed").appendChild(renderFeedItem(message));
    if (message.type === "intervention" || message.type === "answer") {
      this.renderQueue();
    }
  }

  /** Follow the live stream, reconnecting from the last seen sequence number. */
  async follow(): Promise<void> {
    this.streamAbort = new AbortController();
    for (;;) {
      try {
        await this.client.subscribe(this.model.lastSeq, (m) => this.onMessage(m), {
          follow: true,
          signal: this.streamAbort.signal,
        });
      } catch {
        if (this.streamAbort.signal.aborted) {
          return;
        }
        await new Promise((resolve) => setTimeout(resolve, 500));
      }
    }
  }

  /** Drain the backlog once (no long-lived connection); used headlessly. */
  async pump(): Promise<void> {
    await this.client.subscribe(this.model.lastSeq, (m) => this.onMessage(m), { follow: false });
  }

  stop(): void {
    this.streamAbort?.abort();
  }

  renderStatus(): void {
    const bar = this.host("statusbar");
    bar.innerHTML = "";
    const session = this.model.session;
    bar.appendChild(Object.assign(document.createElement("span"), {
      className: "phase",
      textContent: session
        ? `${session.scenario} | ${session.loop_phase} | model v${session.model_version}`
        : "no session",
    }));
    bar.appendChild(Object.assign(document.createElement("span"), {
      className: this.model.quiescent() ? "quiescence quiet" : "quiescence busy",
      textContent: this.model.quiescent() ? "loop quiescent" : "loop working",
    }));
    bar.appendChild(Object.assign(document.createElement("span"), {
      className: "role-indicator",
      textContent: `viewing as ${this.model.role}`,
    }));
  }

  renderQueue(): void {
    const queue = this.host("queue");
    queue.innerHTML = "";
    for (const view of this.model.pendingForRole()) {
      queue.appendChild(renderIntervention(view, (id, answer, requestId) =>
        this.client.answer(id, answer, requestId).then(async (result) => {
          if (result.ok) {
            await this.refresh(); // reconcile optimistic state with /state
          }
          return result;
        }),
      ));
    }
  }

  async openTrace(traceId: string): Promise<void> {
    const host = this.host("trace-host");
    host.innerHTML = "";
    host.appendChild(renderTrace(await this.client.trace(traceId)));
  }

  showWhatIf(candidates: string[]): void {
    const host = this.host("whatif-host");
    host.innerHTML = "";
    host.appendChild(renderWhatIf(candidates, (constraint) => this.client.whatif(constraint)));
  }
}

export function mount(base: string, root: HTMLElement, role: Role = "tenant"): ConsoleApp {
  const app = new ConsoleApp(base, root);
  app.setRole(role);
  return app;
}

// Browser boot: pick up the page, wire the role selector, start following.
declare global {
  interface Window {
    adaptsecConsole?: ConsoleApp;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  const root = document.getElementById("console-root");
  if (root) {
    const app = mount(window.location.origin, root);
    const selector = document.getElementById("role-selector") as HTMLSelectElement | null;
    selector?.addEventListener("change", () => app.setRole(selector.value as Role));
    void app.refresh().then(() => app.follow());
    window.adaptsecConsole = app;
  }
}
