// Console views against the recorded-response stub: queue, detail,
// approval 200/409 paths, and what-if rendering of the returned numbers.

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { renderApprovalPanel, renderDetail, renderQueue, renderWhatIf } from "../src/render.js";
import { orderQueue, rankingDeltas, validateWeights } from "../src/state.js";
import { startStub, type Stub, recorded } from "./stub.js";

let stub: Stub;
let client: ApiClient;

beforeEach(async () => {
  stub = await startStub();
  client = new ApiClient(stub.url);
});

afterEach(async () => {
  await stub.close();
});

describe("incident queue", () => {
  it("renders the fixture incident with its flags", async () => {
    const incidents = await client.listIncidents();
    const html = renderQueue(incidents.items);
    expect(html).toContain("INC-POC-001");
    expect(html).toContain("cross-tier-access");
    expect(html).toContain("unusual-TGT-request");
    expect(html).toContain("ISOLATE_HOST(ws-fin-27)");
  });

  it("pins awaiting-analyst items to the top", () => {
    const items = [
      { ...recorded("incidents.json").items[0], cycle_id: "INC-A", status: "completed" },
      { ...recorded("incidents.json").items[0], cycle_id: "INC-B", status: "awaiting_analyst" },
    ];
    expect(orderQueue(items).map((item) => item.cycle_id)).toEqual(["INC-B", "INC-A"]);
  });

  it("renders an empty state for an empty journal", () => {
    expect(renderQueue([])).toContain("No incidents");
  });
});

describe("cycle detail", () => {
  it("shows hypotheses, verdicts, and the ranked scores exactly as returned", async () => {
    const detail = await client.incidentDetail("INC-POC-001");
    const html = renderDetail(detail);
    expect(html).toContain("H1");
    expect(html).toContain("Credential misuse");
    expect(html).toContain("ConditionallyFeasible");
    expect(html).toContain("Tier-1 creds exist on srv-fin-03");
    // Table-derived composites at displayed precision.
    expect(html).toContain("0.599");
    expect(html).toContain("0.498");
    expect(html).toContain("0.105");
    expect(html).toContain("ISOLATE_HOST");
  });
});

describe("approval flow", () => {
  it("drives the 200 path and refreshed state shows Executed", async () => {
    const result = await client.submitDecision("INC-POC-001", "Approved", "casey");
    expect(result.kind).toBe("decided");
    if (result.kind === "decided") {
      expect(result.playbook_status).toBe("Executed");
    }
    const detail = await client.incidentDetail("INC-POC-001");
    expect(detail.playbook?.status).toBe("Executed");
    const approvals = await client.approvals();
    expect(renderApprovalPanel(approvals.items[0])).toContain("Approved");
  });

  it("renders the other analyst's decision on 409", async () => {
    const conflicted = await startStub({ decisionConflict: true });
    try {
      const apiClient = new ApiClient(conflicted.url);
      const result = await apiClient.submitDecision("INC-POC-001", "Rejected", "sam");
      expect(result.kind).toBe("already_decided");
      if (result.kind === "already_decided") {
        expect(result.current?.decision).toBe("Approved");
        expect(renderApprovalPanel(result.current!)).toContain("casey");
      }
    } finally {
      await conflicted.close();
    }
  });

  it("sends the mutation only on an explicit call", async () => {
    await client.listIncidents();
    await client.incidentDetail("INC-POC-001");
    await client.approvals();
    const posts = stub.requests.filter((r) => r.method === "POST");
    expect(posts).toHaveLength(0); // reads never mutate
    await client.submitDecision("INC-POC-001", "Approved", "casey");
    expect(stub.requests.filter((r) => r.method === "POST")).toHaveLength(1);
  });
});

describe("what-if rescoring", () => {
  it("renders default weights with the published scores", async () => {
    const response = await client.rescore("INC-POC-001", { alpha: 0.7, beta: 0.3, gamma: 0 });
    const html = renderWhatIf(response);
    expect(html).toContain("0.599");
    expect(html).toContain("0.498");
    expect(html).toContain("0.105");
  });

  it("renders the reordering for inverted weights", async () => {
    const response = await client.rescore("INC-POC-001", { alpha: 0.3, beta: 0.7, gamma: 0 });
    const deltas = rankingDeltas(response);
    expect(deltas.map((d) => d.action_id)).toEqual(["A1", "A3", "A2"]);
    const html = renderWhatIf(response);
    expect(html).toContain("0.171"); // A1 = 0.3*0.92 - 0.7*0.15
    expect(html).toContain("0.045"); // A3 = 0.3*0.15
    expect(html).toContain("0.042"); // A2 = 0.3*0.84 - 0.7*0.30
  });

  it("validates slider bounds locally and sends nothing when invalid", async () => {
    expect(validateWeights({ alpha: 0, beta: 0.3, gamma: 0 })).toMatch(/alpha/);
    expect(validateWeights({ alpha: 1.6, beta: 0.3, gamma: 0 })).toMatch(/alpha/);
    expect(validateWeights({ alpha: 0.7, beta: -0.1, gamma: 0 })).toMatch(/beta/);
    expect(validateWeights({ alpha: 0.7, beta: 0.3, gamma: 2 })).toMatch(/gamma/);
    expect(validateWeights({ alpha: 0.7, beta: 0.3, gamma: 0 })).toBeNull();
    expect(stub.requests.filter((r) => r.path.includes("rescore"))).toHaveLength(0);
  });

  it("surfaces a server-side 422 as an ApiError", async () => {
    await expect(client.rescore("INC-POC-001", { alpha: 0, beta: 0.3, gamma: 0 })).rejects.toMatchObject({
      status: 422,
    });
  });
});

describe("displayed precision", () => {
  it("never drifts from the API values", async () => {
    const response = await client.rescore("INC-POC-001", { alpha: 0.7, beta: 0.3, gamma: 0 });
    const html = renderWhatIf(response);
    for (const ranked of response.what_if) {
      expect(html).toContain(ranked.composite.toFixed(3));
    }
  });
});
