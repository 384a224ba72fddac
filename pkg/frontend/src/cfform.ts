import type {
  CfQueryDoc,
  CfResponse,
  FeatureDoc,
  SchemaDoc,
} from "./types";

export const RANGE_STEPS = 100;

export interface FeatureFormState {
  feature: FeatureDoc;
  value: number | string;
  locked: boolean;
  forceChange: boolean;
  rangeActive: boolean;
  rangeLo: number; // numeric features only
  rangeHi: number;
  allowedCats: string[]; // categorical features only
}

export interface CfFormState {
  features: FeatureFormState[];
  targetClass: string;
  epsilon: number;
  maxResults?: number;
  timeBudgetMs?: number;
}

export function snapToStep(feature: FeatureDoc, value: number): number {
  const lo = Number(feature.domain[0]);
  const hi = Number(feature.domain[1]);
  if (hi <= lo) return lo;
  const step = (hi - lo) / RANGE_STEPS;
  const snapped = lo + Math.round((value - lo) / step) * step;
  return Math.min(hi, Math.max(lo, snapped));
}

export function buildFormState(schema: SchemaDoc,
                               instance: Record<string, number | string>,
                               targetClass: string): CfFormState {
  return {
    features: schema.features.map((feature) => ({
      feature,
      value: instance[feature.name],
      locked: false,
      forceChange: false,
      rangeActive: false,
      rangeLo: feature.kind === "numeric" ? Number(feature.domain[0]) : 0,
      rangeHi: feature.kind === "numeric" ? Number(feature.domain[1]) : 0,
      allowedCats:
        feature.kind === "categorical" ? feature.domain.map(String) : [],
    })),
    targetClass,
    epsilon: 1.0,
  };
}

/** Locking a feature always clears its force-change flag: the two sets are
 * disjoint by construction and the UI never offers an invalid combination. */
export function setLocked(state: CfFormState, name: string,
                          locked: boolean): void {
  for (const f of state.features) {
    if (f.feature.name === name) {
      f.locked = locked;
      if (locked) f.forceChange = false;
    }
  }
}

export function setForceChange(state: CfFormState, name: string,
                               force: boolean): void {
  for (const f of state.features) {
    if (f.feature.name === name && !f.locked) f.forceChange = force;
  }
}

/** The submit button is enabled exactly when the server would accept the
 * query: the target must differ from the current prediction. */
export function canSubmit(state: CfFormState,
                          currentPrediction: string | null): boolean {
  return currentPrediction !== null && state.targetClass !== currentPrediction;
}

export function formToQuery(state: CfFormState): CfQueryDoc {
  const instance: Record<string, number | string> = {};
  const lock: string[] = [];
  const forceChange: string[] = [];
  const ranges: Record<string, Array<number | string>> = {};
  for (const f of state.features) {
    instance[f.feature.name] = f.value;
    if (f.locked) lock.push(f.feature.name);
    if (f.forceChange) forceChange.push(f.feature.name);
    if (f.rangeActive) {
      if (f.feature.kind === "numeric") {
        ranges[f.feature.name] = [f.rangeLo, f.rangeHi];
      } else if (f.allowedCats.length > 0) {
        ranges[f.feature.name] = [...f.allowedCats];
      }
    }
  }
  const query: CfQueryDoc = {
    instance,
    target_class: state.targetClass,
    epsilon: state.epsilon,
    lock,
    force_change: forceChange,
    ranges,
  };
  if (state.maxResults !== undefined) query.max_results = state.maxResults;
  if (state.timeBudgetMs !== undefined) query.time_budget_ms = state.timeBudgetMs;
  return query;
}

function formatValue(v: number | string): string {
  return typeof v === "number" ? v.toPrecision(4) : String(v);
}

/** Result cards: only the changed features are shown, old -> new. */
export function renderResults(container: HTMLElement, resp: CfResponse): void {
  container.textContent = "";
  if (resp.results.length === 0) {
    const empty = document.createElement("p");
    empty.className = "cf-empty";
    const extra = (resp as { tightest_violation?: string }).tightest_violation;
    empty.textContent = extra
      ? `no counterfactual under these constraints (${extra})`
      : "no counterfactual under these constraints";
    container.appendChild(empty);
    return;
  }
  for (const result of resp.results) {
    const card = document.createElement("div");
    card.className = "cf-card";
    const head = document.createElement("div");
    head.className = "cf-card-head";
    head.textContent =
      `#${result.rank} · ${result.sparsity} change(s) · ` +
      `distance ${result.distance.toPrecision(3)}`;
    card.appendChild(head);
    const list = document.createElement("ul");
    for (const change of result.changes) {
      const li = document.createElement("li");
      li.className = "cf-change";
      li.dataset.feature = change.feature;
      li.textContent =
        `${change.feature}: ${formatValue(change.old)} → ` +
        formatValue(change.new);
      list.appendChild(li);
    }
    card.appendChild(list);
    container.appendChild(card);
  }
}

/** Per-feature form rows with lock toggles and 100-step range sliders. */
export function renderForm(container: HTMLElement, state: CfFormState,
                           classes: string[],
                           onChange: () => void): void {
  container.textContent = "";
  for (const f of state.features) {
    const row = document.createElement("div");
    row.className = "cf-row";
    row.dataset.feature = f.feature.name;

    const label = document.createElement("label");
    label.textContent = f.feature.name;
    row.appendChild(label);

    const lock = document.createElement("input");
    lock.type = "checkbox";
    lock.className = "lock";
    lock.checked = f.locked;
    lock.addEventListener("change", () => {
      setLocked(state, f.feature.name, lock.checked);
      renderForm(container, state, classes, onChange);
      onChange();
    });
    row.appendChild(lock);

    const force = document.createElement("input");
    force.type = "checkbox";
    force.className = "force";
    force.checked = f.forceChange;
    force.disabled = f.locked;
    force.addEventListener("change", () => {
      setForceChange(state, f.feature.name, force.checked);
      onChange();
    });
    row.appendChild(force);

    if (f.feature.kind === "numeric") {
      for (const bound of ["lo", "hi"] as const) {
        const slider = document.createElement("input");
        slider.type = "range";
        slider.className = `range-${bound}`;
        slider.min = String(f.feature.domain[0]);
        slider.max = String(f.feature.domain[1]);
        slider.step = String(
          (Number(f.feature.domain[1]) - Number(f.feature.domain[0])) /
            RANGE_STEPS,
        );
        slider.value = String(bound === "lo" ? f.rangeLo : f.rangeHi);
        slider.addEventListener("input", () => {
          const snapped = snapToStep(f.feature, Number(slider.value));
          if (bound === "lo") f.rangeLo = Math.min(snapped, f.rangeHi);
          else f.rangeHi = Math.max(snapped, f.rangeLo);
          f.rangeActive = true;
          onChange();
        });
        row.appendChild(slider);
      }
    }
    container.appendChild(row);
  }

  const target = document.createElement("select");
  target.className = "target";
  for (const c of classes) {
    const opt = document.createElement("option");
    opt.value = c;
    opt.textContent = c;
    opt.selected = c === state.targetClass;
    target.appendChild(opt);
  }
  target.addEventListener("change", () => {
    state.targetClass = target.value;
    onChange();
  });
  container.appendChild(target);
}
