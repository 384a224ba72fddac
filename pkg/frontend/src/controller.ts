import { ApiClient, ApiError } from "./api";
import { ViewStore } from "./revision";
import { showToast } from "./tree";
import type { ToggleHandler } from "./tree";

/**
 * Click-to-toggle flow: apply successful responses through the monotone
 * store; a 409 on a leaf shows a toast and leaves the view untouched; a 409
 * for a stale revision refetches the current view rather than guessing.
 */
export function makeToggleHandler(api: ApiClient, store: ViewStore,
                                  sessionId: string,
                                  panel: HTMLElement): ToggleHandler {
  return async (nodeId: number, revision: number) => {
    try {
      store.apply(await api.toggle(sessionId, nodeId, revision));
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        if (err.body.message.includes("leaf")) {
          showToast(panel, "leaf has no subtree");
        } else {
          store.apply(await api.tree(sessionId));
        }
        return;
      }
      throw err;
    }
  };
}
