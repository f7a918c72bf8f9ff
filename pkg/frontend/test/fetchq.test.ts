import { describe, expect, it } from "vitest";

import { PanelQuery } from "../src/fetchq.js";

function deferred<T>() {
  let resolve!: (value: T) => void;
  let reject!: (error: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

describe("PanelQuery", () => {
  it("applies a single response", async () => {
    const q = new PanelQuery<number>();
    const applied: number[] = [];
    const ok = await q.run(
      () => Promise.resolve(7),
      (v) => applied.push(v),
    );
    expect(ok).toBe(true);
    expect(applied).toEqual([7]);
  });

  it("discards a stale response superseded by a newer run", async () => {
    const q = new PanelQuery<string>();
    const applied: string[] = [];
    const slow = deferred<string>();
    const fast = deferred<string>();

    const first = q.run(
      () => slow.promise,
      (v) => applied.push(v),
    );
    const second = q.run(
      () => fast.promise,
      (v) => applied.push(v),
    );

    fast.resolve("fresh");
    await second;
    slow.resolve("stale");
    await first;

    expect(applied).toEqual(["fresh"]);
    expect(await first).toBe(false);
  });

  it("suppresses errors from superseded runs", async () => {
    const q = new PanelQuery<string>();
    const errors: unknown[] = [];
    const boom = deferred<string>();

    const first = q.run(
      () => boom.promise,
      () => {},
      (e) => errors.push(e),
    );
    const second = q.run(
      () => Promise.resolve("fine"),
      () => {},
      (e) => errors.push(e),
    );
    await second;
    boom.reject(new Error("stale failure"));
    await first;
    expect(errors).toEqual([]);
  });

  it("reports errors from the current run", async () => {
    const q = new PanelQuery<string>();
    const errors: unknown[] = [];
    const ok = await q.run(
      () => Promise.reject(new Error("down")),
      () => {},
      (e) => errors.push(e),
    );
    expect(ok).toBe(false);
    expect(errors).toHaveLength(1);
  });
});
