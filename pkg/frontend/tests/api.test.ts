import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import type { GenerateResponse } from "../src/api.js";

function fakeFetch(status: number, body: unknown): typeof fetch {
  return async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
}

const RESPONSE: GenerateResponse = {
  wav: "UklGRg==",
  mel: { frame_rate: 31.7, values: [[-11.5, -3.2]] },
  achieved_envelope: { rate: 10, values: [0.1, 0.2] },
  envelope_r: 0.73251,
  predicted_class: 2,
  predicted_class_name: "high",
  seed: 424242,
};

describe("api client", () => {
  it("returns the generate payload untouched", async () => {
    const api = new ApiClient("", fakeFetch(200, RESPONSE));
    const res = await api.generate({ steps: 4 });
    // envelope_r must reach the caller exactly as the server sent it
    expect(res.envelope_r).toBe(0.73251);
    expect(res.seed).toBe(424242);
    expect(res).toEqual(RESPONSE);
  });

  it("sends the request body as-is", async () => {
    let captured: unknown = null;
    const spy: typeof fetch = async (_url, init) => {
      captured = JSON.parse(String(init?.body));
      return new Response(JSON.stringify(RESPONSE), { status: 200 });
    };
    const api = new ApiClient("", spy);
    const req = { tag: "low", steps: 7, seed: 3, curve: null, mask: null };
    await api.generate(req);
    expect(captured).toEqual(req);
  });

  it("surfaces field-level 400 details", async () => {
    const api = new ApiClient(
      "",
      fakeFetch(400, { detail: { field: "curve", message: "curve length mismatch" } }),
    );
    try {
      await api.generate({ curve: { rate: 10, values: [1] } });
      expect.unreachable("should have thrown");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      const apiErr = err as ApiError;
      expect(apiErr.status).toBe(400);
      expect(apiErr.detail).toEqual({ field: "curve", message: "curve length mismatch" });
    }
  });

  it("wraps opaque 500s", async () => {
    const api = new ApiClient("", fakeFetch(500, { error: "internal", id: "abc123" }));
    await expect(api.mix(["AA=="])).rejects.toMatchObject({
      status: 500,
    });
  });

  it("posts mix clips verbatim", async () => {
    let captured: unknown = null;
    const spy: typeof fetch = async (_url, init) => {
      captured = JSON.parse(String(init?.body));
      return new Response(JSON.stringify({ wav: "AA==" }), { status: 200 });
    };
    const api = new ApiClient("", spy);
    await api.mix(["QQ==", "Qg=="]);
    expect(captured).toEqual({ clips: ["QQ==", "Qg=="] });
  });
});
