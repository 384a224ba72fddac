import { ApiClient, ApiError } from "./api";
import {
  buildFormState,
  canSubmit,
  formToQuery,
  renderForm,
  renderResults,
} from "./cfform";
import type { CfFormState } from "./cfform";
import { makeToggleHandler } from "./controller";
import { renderEdgeTable, renderHistogram, SortKey } from "./edges";
import { ViewStore } from "./revision";
import { renderTree, showToast } from "./tree";
import type { ModelInfo } from "./types";

declare global {
  interface Window {
    XPLAIN_BASE_URL?: string;
  }
}

/** One in-flight request per panel; a new submission cancels the old one. */
class PanelFlight {
  private controller: AbortController | null = null;

  begin(): AbortSignal {
    this.controller?.abort();
    this.controller = new AbortController();
    return this.controller.signal;
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export async function bootstrap(): Promise<void> {
  const api = new ApiClient(window.XPLAIN_BASE_URL ?? "");
  const modelId = el<HTMLInputElement>("model-id").value.trim();
  if (!modelId) return;

  const info: ModelInfo = await api.modelSchema(modelId);
  const schema = info.schema;
  const store = new ViewStore();
  const treePanel = el<HTMLElement>("tree-panel");
  const pending = el<HTMLElement>("pending");

  const session = await api.createSession(modelId);
  store.reset(session);

  const toggleFlow = makeToggleHandler(api, store, session.session_id,
                                       treePanel);
  const onToggle = async (nodeId: number, revision: number) => {
    pending.dataset.busy = "true";
    try {
      await toggleFlow(nodeId, revision);
    } finally {
      pending.dataset.busy = "false";
    }
  };

  store.subscribe((payload) => renderTree(treePanel, payload, onToggle));
  renderTree(treePanel, session, onToggle);

  // -- counterfactual panel ------------------------------------------------

  const cfFlight = new PanelFlight();
  const cfForm = el<HTMLElement>("cf-form");
  const cfResults = el<HTMLElement>("cf-results");
  const submit = el<HTMLButtonElement>("cf-submit");

  const firstInstance: Record<string, number | string> = {};
  for (const f of schema.features) {
    firstInstance[f.name] = f.kind === "numeric" ? Number(f.domain[0]) : String(f.domain[0]);
  }
  const formState: CfFormState = buildFormState(
    schema, firstInstance, schema.target.classes[0]);

  let currentPrediction: string | null = null;
  const refreshSubmit = () => {
    submit.disabled = !canSubmit(formState, currentPrediction);
  };
  const refreshPrediction = async () => {
    const out = await api.predict(modelId, formToQuery(formState).instance);
    currentPrediction = out.class;
    refreshSubmit();
  };

  renderForm(cfForm, formState, [...schema.target.classes], refreshSubmit);
  await refreshPrediction();

  submit.addEventListener("click", async () => {
    const signal = cfFlight.begin();
    pending.dataset.busy = "true";
    try {
      const resp = await api.counterfactuals(modelId, formToQuery(formState),
                                             signal);
      renderResults(cfResults, resp);
    } catch (err) {
      if (err instanceof ApiError) {
        showToast(cfResults, err.body.message);
      } else if ((err as Error).name !== "AbortError") {
        throw err;
      }
    } finally {
      pending.dataset.busy = "false";
    }
  });

  // -- edge-case panel -------------------------------------------------------

  const edgeFlight = new PanelFlight();
  const edgeTable = el<HTMLElement>("edge-table");
  const edgeHist = el<HTMLElement>("edge-hist");
  const thresholdInput = el<HTMLInputElement>("edge-threshold");
  const edgeState = { threshold: 0, sortKey: "risk" as SortKey,
                      ascending: false };

  const runEdges = async () => {
    edgeState.threshold = Number(thresholdInput.value);
    if (!Number.isFinite(edgeState.threshold)) return;
    const signal = edgeFlight.begin();
    const resp = await api.edgeCases(
      modelId,
      { kind: "class-table",
        risks: Object.fromEntries(schema.target.classes.map((c) => [c, 1.0])) },
      { risk_threshold: edgeState.threshold },
      10,
      signal);
    const onSort = (key: SortKey) => {
      edgeState.ascending = key === edgeState.sortKey
        ? !edgeState.ascending : false;
      edgeState.sortKey = key;
      renderEdgeTable(edgeTable, resp, edgeState, onSort);
    };
    renderEdgeTable(edgeTable, resp, edgeState, onSort);
    renderHistogram(edgeHist, resp);
  };
  el<HTMLButtonElement>("edge-run").addEventListener("click", runEdges);
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  el<HTMLButtonElement>("connect").addEventListener("click", () => {
    void bootstrap();
  });
}
