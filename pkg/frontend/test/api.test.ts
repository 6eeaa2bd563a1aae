import { afterEach, describe, expect, it, vi } from "vitest";

import { createApi } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("api client", () => {
  it("posts multipart uploads to /sources", async () => {
    const fetchMock = vi.fn().mockResolvedValue(
      jsonResponse({ name: "nature", profile: "p", document_count: 3 })
    );
    vi.stubGlobal("fetch", fetchMock);

    const api = createApi("http://svc");
    const registered = await api.uploadSource(new File(["[]"], "n.json"), "nature", "p", "json");

    expect(registered.document_count).toBe(3);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("http://svc/sources");
    expect(init.method).toBe("POST");
    const form = init.body as FormData;
    expect(form.get("name")).toBe("nature");
    expect(form.get("format")).toBe("json");
  });

  it("surfaces the service's error detail", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(jsonResponse({ detail: "duplicate source: 'nature'" }, 400))
    );
    await expect(createApi().getSources()).rejects.toThrow("400: duplicate source: 'nature'");
  });

  it("falls back to the status text for non-JSON errors", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(new Response("boom", { status: 500, statusText: "Internal Server Error" }))
    );
    await expect(createApi().getPresets()).rejects.toThrow("500: Internal Server Error");
  });
});
