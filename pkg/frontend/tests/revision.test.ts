import { describe, expect, it } from "vitest";

import { ViewStore } from "../src/revision";
import type { SessionCreated, ViewPayload } from "../src/types";

import session from "../fixtures/session_create.json";
import toggleContract from "../fixtures/toggle_contract.json";
import toggleExpand from "../fixtures/toggle_expand.json";
import { dataOf } from "./helpers";

const v0 = dataOf<SessionCreated>(session);
const v1 = dataOf<ViewPayload>(toggleExpand);
const v2 = dataOf<ViewPayload>(toggleContract);

function shuffles<T>(items: T[]): T[][] {
  if (items.length <= 1) return [items];
  const out: T[][] = [];
  items.forEach((item, i) => {
    const rest = [...items.slice(0, i), ...items.slice(i + 1)];
    for (const tail of shuffles(rest)) out.push([item, ...tail]);
  });
  return out;
}

describe("revision safety", () => {
  it("out-of-order responses never regress the rendered view", () => {
    expect(v0.view.revision).toBe(0);
    expect(v1.view.revision).toBe(1);
    expect(v2.view.revision).toBe(2);

    for (const order of shuffles([v0, v1, v2])) {
      const store = new ViewStore();
      const seen: number[] = [];
      store.subscribe((p) => seen.push(p.view.revision));
      for (const payload of order) store.apply(payload);
      // monotone application: never a smaller revision after a larger one
      for (let i = 1; i < seen.length; i++) {
        expect(seen[i]).toBeGreaterThan(seen[i - 1]);
      }
      expect(store.revision).toBe(2);
    }
  });

  it("equal revisions are ignored rather than re-applied", () => {
    const store = new ViewStore();
    expect(store.apply(v1)).toBe(true);
    expect(store.apply({ ...v1 })).toBe(false);
    expect(store.revision).toBe(1);
  });
});
