import { describe, expect, it, vi } from "vitest";

import type { AnswerResult, InterventionView, TraceView } from "../src/api.js";
import { renderIntervention, renderTrace, renderWhatIf } from "../src/panels.js";

function view(overrides: Partial<InterventionView> = {}): InterventionView {
  return {
    id: "iv-1",
    role: "tenant",
    key: "device_trust:d1",
    question: "Is the new device d1 yours (trusted)?",
    answer_schema: { type: "boolean" },
    explanation: {
      observability: "A device named d1 joined the WiFi network.",
      transparency: "Trusted devices get access; untrusted ones get contained.",
      feedforward: "Reported device details: type=unrecognised IoT gadget.",
      intelligibility: null,
    },
    created_at: 0,
    context: { device: "d1" },
    state: "pending",
    answer: null,
    ...overrides,
  };
}

const accepted: AnswerResult = { ok: true, status: 200, body: { resumed: "analysis" } };

describe("intervention panel", () => {
  it("shows the four explanation fields as distinct labeled sections", () => {
    const card = renderIntervention(view({
      role: "engineer",
      explanation: {
        observability: "obs",
        transparency: "why",
        feedforward: "ff",
        intelligibility: "intel",
      },
    }), async () => accepted);
    const labels = [...card.querySelectorAll(".explanation-label")].map((n) => n.textContent);
    expect(labels).toEqual([
      "What was observed",
      "Why this is needed",
      "Details to help you decide",
      "How controls may be changed safely",
    ]);
    const texts = [...card.querySelectorAll(".explanation-text")].map((n) => n.textContent);
    expect(texts.every((t) => t && t.length > 0)).toBe(true);
  });

  it("refuses to render an intervention with empty explanation text", () => {
    expect(() => renderIntervention(
      view({ explanation: { observability: "", transparency: "y", feedforward: null, intelligibility: null } }),
      async () => accepted,
    )).toThrow(/explanation/);
  });

  it("renders a boolean toggle with the device feedforward panel", () => {
    const card = renderIntervention(view(), async () => accepted);
    expect(card.querySelector("input.boolean-toggle")).not.toBeNull();
    expect(card.textContent).toContain("unrecognised IoT gadget");
    expect(card.querySelector(".toggle-label")?.textContent).toContain("Trusted");
  });

  it("bounds the integer input by the schema", () => {
    const card = renderIntervention(view({
      key: "min_password_chars",
      answer_schema: { type: "integer", min: 9, max: 128 },
    }), async () => accepted);
    const input = card.querySelector("input.integer-input") as HTMLInputElement;
    expect(input.min).toBe("9");
    expect(input.max).toBe("128");
  });

  it("grays out expired requests with a notice and no controls", () => {
    const card = renderIntervention(view({ state: "expired" }), async () => accepted);
    expect(card.classList.contains("expired")).toBe(true);
    expect(card.querySelector(".expiry-notice")).not.toBeNull();
    expect(card.querySelector("button.submit")).toBeNull();
  });

  it("submits exactly once per request id even when double-clicked", async () => {
    const submit = vi.fn(async () => {
      await new Promise((resolve) => setTimeout(resolve, 20));
      return accepted;
    });
    const card = renderIntervention(view(), submit);
    (card.querySelector("input.boolean-toggle") as HTMLInputElement).checked = true;
    const button = card.querySelector("button.submit") as HTMLButtonElement;
    button.click();
    button.click();
    button.click();
    await new Promise((resolve) => setTimeout(resolve, 60));
    expect(submit).toHaveBeenCalledTimes(1);
    expect(submit).toHaveBeenCalledWith("iv-1", true, "console-iv-1");
  });

  it("surfaces 409 and 422 rejections verbatim with retry guidance", async () => {
    const conflict: AnswerResult = { ok: false, status: 409, body: { detail: "already answered" } };
    const card = renderIntervention(view(), async () => conflict);
    (card.querySelector("input.boolean-toggle") as HTMLInputElement).checked = true;
    (card.querySelector("button.submit") as HTMLButtonElement).click();
    await new Promise((resolve) => setTimeout(resolve, 5));
    const status = card.querySelector(".status") as HTMLElement;
    expect(status.textContent).toContain("409");
    expect(status.textContent).toContain("already answered");
    expect(status.textContent).toContain("refresh the queue");

    const invalid: AnswerResult = { ok: false, status: 422, body: { detail: "expected a boolean" } };
    const card2 = renderIntervention(view(), async () => invalid);
    (card2.querySelector("input.boolean-toggle") as HTMLInputElement).checked = true;
    const button2 = card2.querySelector("button.submit") as HTMLButtonElement;
    button2.click();
    await new Promise((resolve) => setTimeout(resolve, 5));
    expect((card2.querySelector(".status") as HTMLElement).textContent).toContain("expected a boolean");
    expect(button2.disabled).toBe(false); // invalid value may be corrected and resubmitted
  });
});

describe("trace walkthrough", () => {
  const trace: TraceView = {
    id: "t1",
    verdict: "violating",
    violated_at: 4,
    actions: [],
    steps: [
      { t: 1, action: { name: "exit", args: ["tenant", "home"] }, added: [], removed: ["in(tenant,home)"] },
      { t: 2, action: { name: "close", args: ["sl"] }, added: ["locked(sl)"], removed: ["unlocked(sl)"] },
      { t: 3, action: { name: "open", args: ["d1", "sl"] }, added: ["unlocked(sl)"], removed: ["locked(sl)"] },
      { t: 4, action: { name: "enter", args: ["outsider", "home"] }, added: ["in(outsider,home)"], removed: [] },
    ],
  };

  it("steps through the violating trace with state diffs", () => {
    const panel = renderTrace(trace);
    const steps = panel.querySelectorAll(".trace-step");
    expect(steps.length).toBe(4);
    expect(steps[3].textContent).toContain("in(outsider,home)");
    expect(panel.querySelector(".violation-note")?.textContent).toContain("step 4");
  });

  it("shows a not-found view for unknown ids", () => {
    const panel = renderTrace(null);
    expect(panel.classList.contains("not-found")).toBe(true);
  });
});

describe("what-if preview", () => {
  it("evaluates a candidate and renders the break count before any approval", async () => {
    const evaluate = vi.fn(async () => ({
      constraint: "forbid open(X, sl) when net_device(X)",
      eliminates: 1,
      breaks: 1,
    }));
    const panel = renderWhatIf(["forbid open(X, sl) when net_device(X)"], evaluate);
    (panel.querySelector("button.preview") as HTMLButtonElement).click();
    await new Promise((resolve) => setTimeout(resolve, 5));
    const result = panel.querySelector(".whatif-result") as HTMLElement;
    expect(result.textContent).toContain("breaks 1 normal routine");
    expect(result.classList.contains("breaks")).toBe(true);
  });

  it("is disabled when there are no candidates", () => {
    const panel = renderWhatIf([], async () => ({ constraint: "", eliminates: 0, breaks: 0 }));
    expect(panel.classList.contains("disabled")).toBe(true);
    expect(panel.querySelector("button.preview")).toBeNull();
  });
});
