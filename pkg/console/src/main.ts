// Browser bootstrap: polling loop, selection, approval gestures, what-if
// panel. Mutations fire only from explicit clicks; reads poll every 5 s.

import { ApiClient, ApiError, type ApprovalItem } from "./api.js";
import { renderApprovalPanel, renderDetail, renderErrorBanner, renderInlineValidation, renderQueue, renderWhatIf } from "./render.js";
import { filterByStatus, validateWeights } from "./state.js";

const POLL_INTERVAL_MS = 5000;

interface ConsoleElements {
  banner: HTMLElement;
  queue: HTMLElement;
  detail: HTMLElement;
  approvals: HTMLElement;
  whatIf: HTMLElement;
  statusFilter: HTMLSelectElement;
  alpha: HTMLInputElement;
  beta: HTMLInputElement;
  gamma: HTMLInputElement;
  rescoreButton: HTMLButtonElement;
  validation: HTMLElement;
}

export function startConsole(root: Document, baseUrl: string, token: string | null): void {
  const el: ConsoleElements = {
    banner: root.getElementById("banner")!,
    queue: root.getElementById("queue")!,
    detail: root.getElementById("detail")!,
    approvals: root.getElementById("approvals")!,
    whatIf: root.getElementById("what-if")!,
    statusFilter: root.getElementById("status-filter") as HTMLSelectElement,
    alpha: root.getElementById("w-alpha") as HTMLInputElement,
    beta: root.getElementById("w-beta") as HTMLInputElement,
    gamma: root.getElementById("w-gamma") as HTMLInputElement,
    rescoreButton: root.getElementById("rescore") as HTMLButtonElement,
    validation: root.getElementById("slider-validation")!,
  };
  const client = new ApiClient(baseUrl, token);
  let selected: string | null = null;
  let decisionInFlight = false;

  async function refresh(): Promise<void> {
    try {
      const [incidents, approvals] = await Promise.all([client.listIncidents(), client.approvals()]);
      el.banner.innerHTML = "";
      const filtered = filterByStatus(incidents.items, el.statusFilter.value || null);
      el.queue.innerHTML = renderQueue(filtered);
      el.approvals.innerHTML = approvals.items.map((item: ApprovalItem) => renderApprovalPanel(item)).join("");
      if (selected) {
        el.detail.innerHTML = renderDetail(await client.incidentDetail(selected));
      }
    } catch (error) {
      // Non-blocking: keep the last view, show the banner with retry.
      el.banner.innerHTML = renderErrorBanner(error instanceof Error ? error.message : String(error));
    }
  }

  el.queue.addEventListener("click", async (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>(".queue-row");
    if (!row) return;
    selected = row.dataset.cycle ?? null;
    if (selected) {
      el.detail.innerHTML = renderDetail(await client.incidentDetail(selected));
    }
  });

  el.banner.addEventListener("click", (event) => {
    if ((event.target as HTMLElement).classList.contains("retry")) void refresh();
  });

  el.approvals.addEventListener("click", async (event) => {
    const button = event.target as HTMLElement;
    const decision = button.dataset.decision as "Approved" | "Rejected" | undefined;
    const panel = button.closest<HTMLElement>(".approval");
    if (!decision || !panel || decisionInFlight) return;
    const cycleId = panel.dataset.cycle;
    const analyst = panel.querySelector<HTMLInputElement>(".analyst-name")?.value.trim();
    if (!cycleId || !analyst) {
      el.banner.innerHTML = renderErrorBanner("enter an analyst name before deciding");
      return;
    }
    decisionInFlight = true; // at most one in-flight mutation per cycle
    try {
      const result = await client.submitDecision(cycleId, decision, analyst);
      if (result.kind === "already_decided" && result.current) {
        el.approvals.innerHTML = renderApprovalPanel(result.current);
      }
      selected = cycleId;
      await refresh();
    } catch (error) {
      // Decision not marked sent; the analyst may retry.
      el.banner.innerHTML = renderErrorBanner(error instanceof Error ? error.message : String(error));
    } finally {
      decisionInFlight = false;
    }
  });

  el.rescoreButton.addEventListener("click", async () => {
    if (!selected) {
      el.validation.innerHTML = renderInlineValidation("select an incident first");
      return;
    }
    const weights = {
      alpha: Number(el.alpha.value),
      beta: Number(el.beta.value),
      gamma: Number(el.gamma.value),
    };
    const problem = validateWeights(weights);
    if (problem) {
      el.validation.innerHTML = renderInlineValidation(problem);
      return; // no request is sent for out-of-bounds sliders
    }
    el.validation.innerHTML = "";
    try {
      el.whatIf.innerHTML = renderWhatIf(await client.rescore(selected, weights));
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        el.validation.innerHTML = renderInlineValidation(error.detail);
      } else {
        el.banner.innerHTML = renderErrorBanner(error instanceof Error ? error.message : String(error));
      }
    }
  });

  el.statusFilter.addEventListener("change", () => void refresh());

  void refresh();
  setInterval(() => void refresh(), POLL_INTERVAL_MS);
}

declare global {
  interface Window {
    AGENTSOC_API?: string;
    AGENTSOC_TOKEN?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("queue")) {
  // Token lives in session memory only (login field or injected global).
  startConsole(document, window.AGENTSOC_API ?? "http://127.0.0.1:8787", window.AGENTSOC_TOKEN ?? null);
}
