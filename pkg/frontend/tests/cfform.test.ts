import { beforeEach, describe, expect, it } from "vitest";
import { z } from "zod";

import {
  buildFormState,
  canSubmit,
  formToQuery,
  renderForm,
  renderResults,
  setForceChange,
  setLocked,
  snapToStep,
  RANGE_STEPS,
} from "../src/cfform";
import type { CfResponse, ModelInfo } from "../src/types";

import cfFixture from "../fixtures/counterfactuals.json";
import cfEmpty from "../fixtures/counterfactuals_empty.json";
import modelSchema from "../fixtures/model_schema.json";
import { dataOf } from "./helpers";

const info = dataOf<ModelInfo>(modelSchema);
const schema = info.schema;
const featureNames = schema.features.map((f) => f.name) as [string, ...string[]];
const classes = schema.target.classes as [string, ...string[]];

// The query contract, stated independently of the form code.
const querySchema = z
  .object({
    instance: z.record(z.union([z.number(), z.string()])),
    target_class: z.enum(classes),
    epsilon: z.number().gt(0).lte(1),
    lock: z.array(z.enum(featureNames)),
    force_change: z.array(z.enum(featureNames)),
    ranges: z.record(z.array(z.union([z.number(), z.string()]))),
    max_results: z.number().int().positive().optional(),
    time_budget_ms: z.number().positive().optional(),
  })
  .strict()
  .superRefine((q, ctx) => {
    const lock = new Set(q.lock);
    for (const f of q.force_change) {
      if (lock.has(f)) {
        ctx.addIssue({ code: z.ZodIssueCode.custom,
                       message: `${f} both locked and forced` });
      }
    }
    for (const feature of schema.features) {
      const v = q.instance[feature.name];
      if (v === undefined) {
        ctx.addIssue({ code: z.ZodIssueCode.custom,
                       message: `missing ${feature.name}` });
        continue;
      }
      if (feature.kind === "numeric") {
        const [lo, hi] = feature.domain.map(Number);
        if (typeof v !== "number" || v < lo || v > hi) {
          ctx.addIssue({ code: z.ZodIssueCode.custom,
                         message: `${feature.name} out of domain` });
        }
      } else if (!feature.domain.includes(String(v))) {
        ctx.addIssue({ code: z.ZodIssueCode.custom,
                       message: `${feature.name} unknown category` });
      }
    }
    for (const [name, range] of Object.entries(q.ranges)) {
      const feature = schema.features.find((f) => f.name === name);
      if (!feature) {
        ctx.addIssue({ code: z.ZodIssueCode.custom,
                       message: `range for unknown feature ${name}` });
        continue;
      }
      if (feature.kind === "numeric") {
        const [lo, hi] = range.map(Number);
        const [dlo, dhi] = feature.domain.map(Number);
        if (range.length !== 2 || lo > hi || lo < dlo || hi > dhi) {
          ctx.addIssue({ code: z.ZodIssueCode.custom,
                         message: `bad numeric range for ${name}` });
        }
      }
    }
  });

// deterministic little PRNG so the 50 generated states are reproducible
function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (1664525 * s + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

function randomInstance(rand: () => number): Record<string, number | string> {
  const out: Record<string, number | string> = {};
  for (const f of schema.features) {
    if (f.kind === "numeric") {
      const [lo, hi] = f.domain.map(Number);
      out[f.name] = lo + rand() * (hi - lo);
    } else {
      out[f.name] = String(f.domain[Math.floor(rand() * f.domain.length)]);
    }
  }
  return out;
}

describe("counterfactual form serialization", () => {
  it("50 generated form states produce schema-valid query JSON", () => {
    const rand = lcg(7);
    for (let trial = 0; trial < 50; trial++) {
      const state = buildFormState(
        schema, randomInstance(rand),
        classes[Math.floor(rand() * classes.length)]);
      state.epsilon = 0.05 + rand() * 0.95;
      for (const f of state.features) {
        if (rand() < 0.3) setLocked(state, f.feature.name, true);
        if (rand() < 0.3) setForceChange(state, f.feature.name, true);
        if (f.feature.kind === "numeric" && rand() < 0.4) {
          const a = snapToStep(f.feature, Number(f.feature.domain[0]) +
            rand() * (Number(f.feature.domain[1]) - Number(f.feature.domain[0])));
          const b = snapToStep(f.feature, Number(f.feature.domain[0]) +
            rand() * (Number(f.feature.domain[1]) - Number(f.feature.domain[0])));
          f.rangeLo = Math.min(a, b);
          f.rangeHi = Math.max(a, b);
          f.rangeActive = true;
        }
      }
      if (rand() < 0.5) state.maxResults = 1 + Math.floor(rand() * 10);
      const query = formToQuery(state);
      const verdict = querySchema.safeParse(query);
      expect(verdict.success, JSON.stringify(verdict)).toBe(true);
      // serialization is also pure JSON (round-trips bit-exactly)
      expect(JSON.parse(JSON.stringify(query))).toEqual(query);
    }
  });

  it("reproduces the recorded query echo bit-exactly", () => {
    const recorded = dataOf<CfResponse>(cfFixture);
    const state = buildFormState(schema, recorded.query.instance,
                                 recorded.query.target_class);
    state.maxResults = recorded.query.max_results;
    expect(formToQuery(state)).toEqual(recorded.query);
  });

  it("locking a feature disables force-change on it", () => {
    const rand = lcg(1);
    const state = buildFormState(schema, randomInstance(rand), classes[0]);
    const name = schema.features[0].name;
    setForceChange(state, name, true);
    expect(formToQuery(state).force_change).toContain(name);
    setLocked(state, name, true);
    const q = formToQuery(state);
    expect(q.lock).toContain(name);
    expect(q.force_change).not.toContain(name);
    setForceChange(state, name, true); // ignored while locked
    expect(formToQuery(state).force_change).not.toContain(name);
  });

  it("submit is blocked exactly when the target equals the prediction", () => {
    const rand = lcg(2);
    const state = buildFormState(schema, randomInstance(rand), classes[0]);
    expect(canSubmit(state, null)).toBe(false);
    expect(canSubmit(state, classes[0])).toBe(false);
    expect(canSubmit(state, classes[1])).toBe(true);
  });

  it("range sliders snap to 100 steps of the feature domain", () => {
    const feature = schema.features.find((f) => f.kind === "numeric")!;
    const [lo, hi] = feature.domain.map(Number);
    const step = (hi - lo) / RANGE_STEPS;
    for (const raw of [lo + 0.123 * (hi - lo), lo + 0.7777 * (hi - lo), hi]) {
      const snapped = snapToStep(feature, raw);
      const k = (snapped - lo) / step;
      expect(Math.abs(k - Math.round(k))).toBeLessThan(1e-9);
      expect(snapped).toBeGreaterThanOrEqual(lo);
      expect(snapped).toBeLessThanOrEqual(hi);
    }
  });
});

describe("result rendering", () => {
  beforeEach(() => {
    document.body.innerHTML = '<div id="out"></div>';
  });

  it("renders one card per result, showing only changed features", () => {
    const resp = dataOf<CfResponse>(cfFixture);
    const out = document.getElementById("out")!;
    renderResults(out, resp);
    const cards = out.querySelectorAll(".cf-card");
    expect(cards.length).toBe(resp.results.length);
    resp.results.forEach((result, i) => {
      const shown = [...cards[i].querySelectorAll<HTMLElement>(".cf-change")]
        .map((li) => li.dataset.feature);
      expect(shown).toEqual(result.changes.map((c) => c.feature));
      expect(shown.length).toBe(result.sparsity);
    });
  });

  it("renders the explicit empty state", () => {
    const out = document.getElementById("out")!;
    renderResults(out, dataOf<CfResponse>(cfEmpty));
    expect(out.querySelector(".cf-empty")!.textContent).toContain(
      "no counterfactual under these constraints");
  });

  it("form DOM offers lock/force/sliders per feature", () => {
    const rand = lcg(3);
    const state = buildFormState(schema, randomInstance(rand), classes[0]);
    const out = document.getElementById("out")!;
    renderForm(out, state, [...classes], () => {});
    const rows = out.querySelectorAll(".cf-row");
    expect(rows.length).toBe(schema.features.length);
    for (const row of rows) {
      expect(row.querySelector("input.lock")).not.toBeNull();
      expect(row.querySelector("input.force")).not.toBeNull();
    }
    const numericRows = schema.features.filter((f) => f.kind === "numeric");
    expect(out.querySelectorAll("input.range-lo").length)
      .toBe(numericRows.length);
  });
});
