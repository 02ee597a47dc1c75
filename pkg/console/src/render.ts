// HTML renderers: template strings over API data. Numbers always carry
// exact labels next to their bars; nothing is conveyed by color alone.

import type { ApprovalItem, CycleDetail, IncidentSummary, RescoreResponse } from "./api.js";
import { barWidth, formatScore, orderQueue, rankingDeltas } from "./state.js";

function esc(raw: string | null | undefined): string {
  return String(raw ?? "")
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function bar(value: number, label: string): string {
  return (
    `<span class="bar" role="img" aria-label="${esc(label)} ${formatScore(value)}">` +
    `<span class="bar-fill" style="width:${barWidth(value)}%"></span>` +
    `</span><span class="bar-label">${formatScore(value)}</span>`
  );
}

export function renderQueue(items: IncidentSummary[]): string {
  if (items.length === 0) {
    return `<p class="empty">No incidents in this journal yet.</p>`;
  }
  const rows = orderQueue(items)
    .map((item) => {
      const badge = item.status === "awaiting_analyst" ? "badge-waiting" : "badge-done";
      return (
        `<tr data-cycle="${esc(item.cycle_id)}" class="queue-row">` +
        `<td>${esc(item.incident_id ?? item.cycle_id)}</td>` +
        `<td><span class="badge ${badge}">${esc(item.status)}</span></td>` +
        `<td>${esc(item.flags.join(", ") || "-")}</td>` +
        `<td>${item.severity ?? "-"}</td>` +
        `<td>${esc(item.top_action ?? "-")}</td>` +
        `<td>${esc(item.playbook_status ?? "-")}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="queue"><thead><tr>` +
    `<th>Incident</th><th>Status</th><th>Flags</th><th>Sev</th><th>Top action</th><th>Playbook</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderDetail(cycle: CycleDetail): string {
  const incident = cycle.incident;
  const header = incident
    ? `<h2>${esc(incident.incident_id)}</h2>` +
      `<p>${esc(incident.event_summary)} - ${esc(incident.historical_baseline)}</p>` +
      `<p>flags: ${esc(incident.flags.join(", ") || "none")} | severity ${incident.severity}</p>`
    : `<h2>${esc(cycle.cycle_id)}</h2>`;

  const hypotheses = cycle.hypotheses
    .map(
      (h) =>
        `<li><strong>${esc(h.hypothesis_id)}</strong> [${esc(h.kind)}] ${esc(h.description)} ` +
        `<span class="chain">${esc(h.technique_chain.join(" > "))}</span> ${bar(h.confidence, "confidence")}</li>`,
    )
    .join("");

  const verdicts = cycle.verdicts
    .map((v) => {
      const extra =
        v.status === "Infeasible"
          ? ` - ${esc(v.reason)}`
          : v.dependencies.length
            ? ` - depends on: ${esc(v.dependencies.map((d) => d.note).join("; "))}`
            : "";
      return `<li><strong>${esc(v.hypothesis_id)}</strong> ${esc(v.status)}${extra}</li>`;
    })
    .join("");

  const ranked = cycle.ranked
    .map(
      (r) =>
        `<li>#${r.rank} <strong>${esc(r.candidate.action_id)}</strong> ` +
        `${esc(r.candidate.primitive)}(${esc(r.candidate.target)}) ` +
        `containment ${bar(r.candidate.containment, "containment")} ` +
        `impact ${bar(r.candidate.business_impact, "impact")} ` +
        `score <strong class="score">${formatScore(r.composite)}</strong></li>`,
    )
    .join("");

  const steps = cycle.playbook
    ? cycle.playbook.steps
        .map((s) => `<li>${esc(s.primitive)}(${esc(s.target)}) <em>${esc(s.provenance)}</em></li>`)
        .join("")
    : "";
  const playbook = cycle.playbook
    ? `<h3>Playbook ${esc(cycle.playbook.playbook_id)} - ${esc(cycle.playbook.status)}</h3>` +
      `<p>projected impact ${formatScore(cycle.playbook.projected_impact)}</p><ol>${steps}</ol>`
    : "";

  const guardrail = cycle.guardrail
    ? `<p class="guardrail">guardrail: <strong>${esc(cycle.guardrail.outcome)}</strong> - ` +
      `${esc(cycle.guardrail.explanation)}</p>`
    : "";

  const timings = cycle.stage_timings
    .map(([stage, us]) => `<tr><td>${esc(stage)}</td><td>${(us / 1000).toFixed(3)} ms</td></tr>`)
    .join("");

  return (
    `${header}${guardrail}` +
    `<h3>Hypotheses</h3><ol class="hypotheses">${hypotheses}</ol>` +
    `<h3>Feasibility</h3><ul class="verdicts">${verdicts}</ul>` +
    `<h3>Ranked actions</h3><ol class="ranked">${ranked}</ol>` +
    playbook +
    `<h3>Stage timings</h3><table class="timings"><tbody>${timings}</tbody></table>`
  );
}

export function renderApprovalPanel(item: ApprovalItem): string {
  if (item.decision) {
    return (
      `<div class="approval decided">` +
      `<p>${esc(item.cycle_id)}: <strong>${esc(item.decision)}</strong> by ${esc(item.decided_by)}.</p>` +
      `</div>`
    );
  }
  return (
    `<div class="approval pending" data-cycle="${esc(item.cycle_id)}">` +
    `<p><strong>${esc(item.cycle_id)}</strong> awaits review: ${esc(item.playbook_summary)}</p>` +
    `<p>projected impact ${formatScore(item.projected_impact)}` +
    (item.triggered_rules.length ? ` | rules: ${esc(item.triggered_rules.join(", "))}` : "") +
    `</p>` +
    `<label>Analyst <input type="text" class="analyst-name" placeholder="your name"></label>` +
    `<button class="approve" data-decision="Approved">Approve</button>` +
    `<button class="reject" data-decision="Rejected">Reject</button>` +
    `</div>`
  );
}

export function renderWhatIf(response: RescoreResponse): string {
  const original = response.original
    .map(
      (r) =>
        `<li>#${r.rank} ${esc(r.action_id)} ${esc(r.primitive)}(${esc(r.target)}) ` +
        `<strong>${formatScore(r.composite)}</strong></li>`,
    )
    .join("");
  const deltas = rankingDeltas(response)
    .map((d) => {
      const arrow = d.moved > 0 ? `&uarr;${d.moved}` : d.moved < 0 ? `&darr;${-d.moved}` : "=";
      return (
        `<li>#${d.rank_after} ${esc(d.action_id)} ${esc(d.primitive)}(${esc(d.target)}) ` +
        `<strong>${formatScore(d.score_after)}</strong> ` +
        `<span class="delta">(was #${d.rank_before} at ${formatScore(d.score_before)}, ${arrow})</span></li>`
      );
    })
    .join("");
  const w = response.weights;
  return (
    `<div class="what-if-result">` +
    `<p>weights: alpha ${w.alpha} / beta ${w.beta} / gamma ${w.gamma}</p>` +
    `<div class="columns"><div><h4>Original</h4><ol>${original}</ol></div>` +
    `<div><h4>What-if</h4><ol>${deltas}</ol></div></div></div>`
  );
}

export function renderErrorBanner(message: string): string {
  return (
    `<div class="banner error" role="alert">` +
    `<span>${esc(message)}</span> <button class="retry">Retry</button></div>`
  );
}

export function renderInlineValidation(message: string): string {
  return `<p class="slider-validation" role="alert">${esc(message)}</p>`;
}
