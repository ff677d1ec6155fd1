import { describe, expect, it, vi } from "vitest";

import { ApiError, SynthesisClient } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("SynthesisClient", () => {
  it("posts the documented request schema", async () => {
    const fetchMock = vi.fn(async (url: string, init?: RequestInit) => {
      expect(url).toBe("http://svc/v1/synthesize");
      const body = JSON.parse(String(init?.body));
      expect(Object.keys(body).sort()).toEqual(["return_intermediate", "sketch"]);
      expect(typeof body.sketch).toBe("string");
      expect(body.return_intermediate).toBe(true);
      return jsonResponse({ photo: "cGhvdG8=", refined: "cg==", width: 256, height: 256 });
    });
    const client = new SynthesisClient("http://svc", fetchMock);
    const res = await client.synthesize("c2tldGNo", true);
    expect(res.photo).toBe("cGhvdG8=");
    expect(res.refined).toBe("cg==");
    expect(fetchMock).toHaveBeenCalledOnce();
  });

  it("surfaces service error details", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ detail: "input too large" }, 413));
    const client = new SynthesisClient("", fetchMock);
    await expect(client.synthesize("x")).rejects.toThrowError(ApiError);
    await expect(client.synthesize("x")).rejects.toThrow(/413.*input too large/);
  });

  it("rejects malformed success bodies", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ nope: 1 }));
    const client = new SynthesisClient("", fetchMock);
    await expect(client.synthesize("x")).rejects.toThrow(/malformed/);
  });

  it("reads health", async () => {
    const fetchMock = vi.fn(async (url: string) => {
      expect(url).toBe("/healthz");
      return jsonResponse({ status: "ready", checkpoints: { scn: "a", isn: "b" } });
    });
    const client = new SynthesisClient("", fetchMock);
    expect((await client.health()).status).toBe("ready");
  });
});
