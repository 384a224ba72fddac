import type { FrontierNode, ViewPayload } from "./types";

export type ToggleHandler =
  (nodeId: number, revision: number) => void | Promise<void>;

function clusterText(node: FrontierNode): string {
  const counts = node.summary.cluster
    .map((c) => `${c.class}:${c.count}`)
    .join(", ");
  return `${node.summary.label} {${counts}}`;
}

/**
 * Renders the collapsed tree as nested lists. Expanded internal nodes show
 * their children; frontier nodes render as leaves or clickable superleafs
 * (marked with the expand badge). Every number shown comes straight from
 * the server payload.
 */
export function renderTree(container: HTMLElement, payload: ViewPayload,
                           onToggle: ToggleHandler): void {
  const expanded = new Set(payload.view.expanded);
  const frontier = new Map(payload.frontier.map((f) => [f.node_id, f]));
  const revision = payload.view.revision;

  const ids = Object.keys(payload.nodes).map(Number);
  const children = new Set<number>();
  for (const id of ids) {
    for (const c of payload.nodes[String(id)].children) children.add(c);
  }
  const root = ids.find((id) => !children.has(id));

  function renderNode(nodeId: number): HTMLElement {
    const li = document.createElement("li");
    li.dataset.nodeId = String(nodeId);
    const info = payload.nodes[String(nodeId)];

    if (expanded.has(nodeId)) {
      li.className = "node expanded";
      const head = document.createElement("span");
      head.className = "node-head";
      head.textContent = `#${nodeId} (n=${info.n_support})`;
      head.addEventListener("click", () => onToggle(nodeId, revision));
      li.appendChild(head);
      const ul = document.createElement("ul");
      for (const child of info.children) ul.appendChild(renderNode(child));
      li.appendChild(ul);
      return li;
    }

    const front = frontier.get(nodeId);
    if (!front) {
      li.className = "node hidden";
      return li;
    }
    if (front.kind === "leaf") {
      li.className = "node leaf";
      li.textContent = `#${nodeId} ${clusterText(front)}`;
    } else {
      li.className = "node superleaf";
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.textContent = "⊕";
      const label = document.createElement("span");
      label.className = "superleaf-label";
      label.textContent =
        ` #${nodeId} ${clusterText(front)} ` +
        `[${front.summary.subtree_leaves} leaves, ` +
        `depth ${front.summary.subtree_depth}]`;
      li.appendChild(badge);
      li.appendChild(label);
      li.addEventListener("click", () => onToggle(nodeId, revision));
    }
    return li;
  }

  container.textContent = "";
  const rootList = document.createElement("ul");
  rootList.className = "tree";
  if (root !== undefined) rootList.appendChild(renderNode(root));
  container.appendChild(rootList);
}

export function showToast(container: HTMLElement, message: string): void {
  let toast = container.querySelector<HTMLElement>(".toast");
  if (!toast) {
    toast = document.createElement("div");
    toast.className = "toast";
    container.appendChild(toast);
  }
  toast.textContent = message;
}
