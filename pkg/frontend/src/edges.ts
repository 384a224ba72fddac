import type { EdgeCaseDoc, EdgeResponse } from "./types";

export type SortKey = "risk" | "distance";

export interface EdgeBrowserState {
  threshold: number;
  sortKey: SortKey;
  ascending: boolean;
}

export function sortCases(cases: EdgeCaseDoc[], key: SortKey,
                          ascending: boolean): EdgeCaseDoc[] {
  const value = (c: EdgeCaseDoc) =>
    key === "risk" ? c.risk : (c.distance_to_query ?? Number.POSITIVE_INFINITY);
  const sorted = [...cases].sort((a, b) => value(a) - value(b));
  return ascending ? sorted : sorted.reverse();
}

/** Histogram bars carry their exact count; heights are proportional. */
export function renderHistogram(container: HTMLElement,
                                resp: EdgeResponse): void {
  container.textContent = "";
  const { counts } = resp.summary.histogram;
  const max = Math.max(1, ...counts);
  for (const count of counts) {
    const bar = document.createElement("span");
    bar.className = "hist-bar";
    bar.dataset.count = String(count);
    bar.style.height = `${(100 * count) / max}%`;
    container.appendChild(bar);
  }
}

export function renderEdgeTable(container: HTMLElement, resp: EdgeResponse,
                                state: EdgeBrowserState,
                                onSort: (key: SortKey) => void): void {
  container.textContent = "";
  if (resp.cases.length === 0) {
    const empty = document.createElement("p");
    empty.className = "edge-empty";
    empty.textContent = "no edge cases above threshold";
    container.appendChild(empty);
    return;
  }
  const table = document.createElement("table");
  table.className = "edge-table";
  const head = document.createElement("tr");
  for (const col of ["risk", "distance", "predicted", "truth", "synthetic"]) {
    const th = document.createElement("th");
    th.textContent = col;
    if (col === "risk" || col === "distance") {
      th.className = "sortable";
      th.addEventListener("click", () => onSort(col as SortKey));
    }
    head.appendChild(th);
  }
  table.appendChild(head);

  for (const c of sortCases(resp.cases, state.sortKey, state.ascending)) {
    const tr = document.createElement("tr");
    tr.className = "edge-row";
    const cells = [
      String(c.risk),
      c.distance_to_query === null ? "" : c.distance_to_query.toPrecision(3),
      c.predicted,
      c.truth,
      c.synthetic ? "yes" : "no",
    ];
    for (const text of cells) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  container.appendChild(table);
}
