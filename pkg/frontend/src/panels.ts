// DOM builders for the console's three panels: the intervention queue,
// the trace walkthrough, and the what-if preview.

import type {
  AnswerResult,
  InterventionView,
  ServiceClient,
  TraceView,
  WhatIfResult,
} from "./api.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function section(label: string, text: string): HTMLElement {
  const wrap = el("div", "explanation-section");
  wrap.appendChild(el("h4", "explanation-label", label));
  wrap.appendChild(el("p", "explanation-text", text));
  return wrap;
}

export type SubmitAnswer = (
  id: string,
  answer: unknown,
  requestId: string,
) => Promise<AnswerResult>;

/**
 * One intervention card: the question, the labeled explanation sections,
 * a typed answer control, and a single-shot submit.
 *
 * Submission reuses one idempotency key per request, so double clicks (or a
 * retry after a network hiccup) cannot resume the loop twice.
 */
export function renderIntervention(view: InterventionView, submit: SubmitAnswer): HTMLElement {
  if (!view.explanation.observability || !view.explanation.transparency) {
    throw new Error(`intervention ${view.id} arrived without its explanation`);
  }
  const card = el("article", `intervention role-${view.role} state-${view.state}`);
  card.dataset.id = view.id;
  card.appendChild(el("h3", "question", view.question));
  card.appendChild(section("What was observed", view.explanation.observability));
  card.appendChild(section("Why this is needed", view.explanation.transparency));
  if (view.explanation.feedforward) {
    card.appendChild(section("Details to help you decide", view.explanation.feedforward));
  }
  if (view.explanation.intelligibility) {
    card.appendChild(section("How controls may be changed safely", view.explanation.intelligibility));
  }

  if (view.state === "expired") {
    card.classList.add("expired");
    card.appendChild(el("p", "expiry-notice", "This request expired; the loop will ask again."));
    return card;
  }
  if (view.state === "answered") {
    card.appendChild(el("p", "answered-notice", `Answered: ${JSON.stringify(view.answer)}`));
    return card;
  }

  const form = el("div", "answer-form");
  const read = buildAnswerInput(view, form);
  const button = el("button", "submit", "Submit answer");
  const status = el("p", "status", "");
  const requestId = `console-${view.id}`;
  let inflight = false;

  button.addEventListener("click", async () => {
    if (inflight || button.disabled) {
      return; // one submission per request id, double clicks included
    }
    const answer = read();
    if (answer === undefined) {
      status.textContent = "Fill in an answer first.";
      return;
    }
    inflight = true;
    button.disabled = true;
    const result = await submit(view.id, answer, requestId);
    inflight = false;
    if (result.ok) {
      card.classList.remove("state-pending");
      card.classList.add("state-answered");
      status.textContent = `Submitted. Loop resumed: ${String(result.body["resumed"] ?? "ok")}`;
    } else {
      status.textContent = `Rejected (${result.status}): ${String(result.body["detail"] ?? "unknown")}`
        + (result.status === 422 ? " - adjust the answer and submit again." : " - refresh the queue before retrying.");
      if (result.status === 422) {
        button.disabled = false; // bad value: let them fix it
      }
    }
  });

  form.appendChild(button);
  form.appendChild(status);
  card.appendChild(form);
  return card;
}

function buildAnswerInput(view: InterventionView, form: HTMLElement): () => unknown {
  const schema = view.answer_schema;
  if (schema.type === "boolean") {
    const toggle = el("input") as HTMLInputElement;
    toggle.type = "checkbox";
    toggle.className = "boolean-toggle";
    const label = el("label", "toggle-label", view.key.startsWith("device_trust") ? "Trusted" : "Yes");
    label.prepend(toggle);
    form.appendChild(label);
    return () => toggle.checked;
  }
  if (schema.type === "integer") {
    const input = el("input") as HTMLInputElement;
    input.type = "number";
    input.className = "integer-input";
    if (schema.min !== undefined) input.min = String(schema.min);
    if (schema.max !== undefined) input.max = String(schema.max);
    form.appendChild(input);
    return () => (input.value === "" ? undefined : Number(input.value));
  }
  if (schema.type === "choice") {
    const select = el("select", "choice-select") as HTMLSelectElement;
    for (const option of schema.options ?? []) {
      const item = el("option", undefined, option) as HTMLOptionElement;
      item.value = option;
      select.appendChild(item);
    }
    form.appendChild(select);
    return () => select.value;
  }
  if (schema.type === "text") {
    const area = el("textarea", "text-input") as HTMLTextAreaElement;
    form.appendChild(area);
    return () => (area.value.trim() === "" ? undefined : area.value.trim());
  }
  // acknowledgement: the submit button itself is the acknowledgement
  form.appendChild(el("p", "ack-hint", "Submitting acknowledges this task."));
  return () => true;
}

/** Step-through of a trace: each action with the facts it added or removed. */
export function renderTrace(trace: TraceView | null): HTMLElement {
  const panel = el("section", "trace-walkthrough");
  if (trace === null) {
    panel.classList.add("not-found");
    panel.appendChild(el("p", "notice", "No trace with that id."));
    return panel;
  }
  panel.appendChild(el("h3", "trace-title", `Trace ${trace.id} (${trace.verdict})`));
  const list = el("ol", "trace-steps");
  for (const step of trace.steps) {
    const item = el("li", "trace-step");
    item.appendChild(el("span", "step-action",
      `t=${step.t}: ${step.action.name}(${step.action.args.join(",")})`));
    if (step.added.length) {
      item.appendChild(el("span", "step-added", `now: ${step.added.join(", ")}`));
    }
    if (step.removed.length) {
      item.appendChild(el("span", "step-removed", `no longer: ${step.removed.join(", ")}`));
    }
    list.appendChild(item);
  }
  panel.appendChild(list);
  if (trace.violated_at !== null) {
    panel.appendChild(el("p", "violation-note",
      `The requirement is violated at step ${trace.violated_at}.`));
  }
  return panel;
}

/** Candidate picker that previews eliminates/breaks before any approval. */
export function renderWhatIf(
  candidates: string[],
  evaluate: (constraint: string) => Promise<WhatIfResult>,
): HTMLElement {
  const panel = el("section", "whatif-preview");
  panel.appendChild(el("h3", undefined, "What if we enacted..."));
  if (candidates.length === 0) {
    panel.classList.add("disabled");
    panel.appendChild(el("p", "notice", "No candidate controls to preview."));
    return panel;
  }
  const select = el("select", "candidate-picker") as HTMLSelectElement;
  for (const candidate of candidates) {
    const option = el("option", undefined, candidate) as HTMLOptionElement;
    option.value = candidate;
    select.appendChild(option);
  }
  const button = el("button", "preview", "Preview");
  const result = el("p", "whatif-result", "");
  button.addEventListener("click", async () => {
    button.disabled = true;
    try {
      const evaluation = await evaluate(select.value);
      result.textContent =
        `Removes ${evaluation.eliminates} violating path(s); ` +
        `breaks ${evaluation.breaks} normal routine(s).`;
      result.className = evaluation.breaks > 0 ? "whatif-result breaks" : "whatif-result clean";
    } finally {
      button.disabled = false;
    }
  });
  panel.appendChild(select);
  panel.appendChild(button);
  panel.appendChild(result);
  return panel;
}

export function renderFeedItem(message: { seq: number; at: number; type: string }): HTMLElement {
  const row = el("div", `feed-item feed-${message.type}`);
  row.dataset.seq = String(message.seq);
  row.textContent = `#${message.seq} [${message.at}m] ${message.type}`;
  return row;
}
