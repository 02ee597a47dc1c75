// Pure view-state helpers: ordering, formatting, slider validation,
// what-if deltas. No API calls, no DOM, no score recomputation beyond
// display formatting.

import type { IncidentSummary, RescoreRanked, RescoreResponse } from "./api.js";

export interface WhatIfWeights {
  alpha: number;
  beta: number;
  gamma: number;
}

export const SLIDER_BOUNDS = {
  alpha: { min: 0, max: 1.5, exclusiveMin: true },
  beta: { min: 0, max: 1.5, exclusiveMin: false },
  gamma: { min: 0, max: 1.5, exclusiveMin: false },
} as const;

// Returns a message for the inline panel, or null when the request may be sent.
export function validateWeights(weights: WhatIfWeights): string | null {
  if (!(weights.alpha > 0)) return "alpha must be greater than 0";
  if (weights.alpha > 1.5) return "alpha must be at most 1.5";
  if (weights.beta < 0 || weights.beta > 1.5) return "beta must be in [0, 1.5]";
  if (weights.gamma < 0 || weights.gamma > 1.5) return "gamma must be in [0, 1.5]";
  return null;
}

// AwaitingAnalyst items pin to the top; each group keeps cycle-id order.
export function orderQueue(items: IncidentSummary[]): IncidentSummary[] {
  const pinned = items.filter((item) => item.status === "awaiting_analyst");
  const rest = items.filter((item) => item.status !== "awaiting_analyst");
  const byCycle = (a: IncidentSummary, b: IncidentSummary) => a.cycle_id.localeCompare(b.cycle_id);
  return [...pinned.sort(byCycle), ...rest.sort(byCycle)];
}

export function filterByStatus(items: IncidentSummary[], status: string | null): IncidentSummary[] {
  return status ? items.filter((item) => item.status === status) : items;
}

// Displayed precision for scores and confidences: exactly what the API
// returned, shown to three decimals.
export function formatScore(value: number): string {
  return value.toFixed(3);
}

export function barWidth(value: number): number {
  return Math.round(Math.min(Math.max(value, 0), 1) * 100);
}

export interface RankingDelta {
  action_id: string;
  primitive: string;
  target: string;
  rank_before: number;
  rank_after: number;
  score_before: number;
  score_after: number;
  moved: number; // positive = climbed
}

export function rankingDeltas(response: RescoreResponse): RankingDelta[] {
  const before = new Map(response.original.map((r) => [r.action_id, r]));
  const out: RankingDelta[] = [];
  for (const after of response.what_if) {
    const prior = before.get(after.action_id);
    if (!prior) continue;
    out.push({
      action_id: after.action_id,
      primitive: after.primitive,
      target: after.target,
      rank_before: prior.rank,
      rank_after: after.rank,
      score_before: prior.composite,
      score_after: after.composite,
      moved: prior.rank - after.rank,
    });
  }
  return out.sort((a, b) => a.rank_after - b.rank_after);
}

export function summarizeAction(action: RescoreRanked): string {
  return `${action.action_id} ${action.primitive}(${action.target})`;
}

export type BannerState = { visible: boolean; message: string };

export function errorBanner(message: string): BannerState {
  return { visible: true, message };
}

export const noBanner: BannerState = { visible: false, message: "" };
