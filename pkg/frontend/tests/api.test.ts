import { describe, expect, it } from "vitest";

import {
  ApiClient,
  RequestError,
  SchemaError,
  ServiceUnreachableError,
} from "../src/api.js";
import { fixtureFetch } from "./fixture_service.js";

describe("api client", () => {
  it("loads the model registry", async () => {
    const client = new ApiClient("http://fixture", fixtureFetch);
    const models = await client.fetchModels();
    expect(models).toHaveLength(1);
    expect(models[0]!.id).toBe("demo");
    expect(models[0]!.dataset.events[0]!.description).toBe("lockdown");
  });

  it("reports an unreachable service", async () => {
    const client = new ApiClient("http://down", () =>
      Promise.reject(new Error("connection refused")));
    await expect(client.fetchModels()).rejects.toBeInstanceOf(
      ServiceUnreachableError);
  });

  it("reports malformed registry responses as schema errors", async () => {
    const client = new ApiClient("http://bad", () =>
      Promise.resolve(new Response(JSON.stringify({ nope: true }))));
    await expect(client.fetchModels()).rejects.toBeInstanceOf(SchemaError);
  });

  it("surfaces HTTP error bodies", async () => {
    const client = new ApiClient("http://fixture", fixtureFetch);
    await expect(client.fetchFactual("missing")).rejects.toBeInstanceOf(
      RequestError);
  });

  it("handles an empty registry", async () => {
    const client = new ApiClient("http://empty", () =>
      Promise.resolve(new Response(JSON.stringify({ models: [] }))));
    expect(await client.fetchModels()).toEqual([]);
  });
});
