import type { ViewPayload } from "./types";

/**
 * Holds the latest tree view. Updates are applied only when their revision
 * is strictly newer than the current one, so responses arriving out of
 * order can never roll the rendered view backwards.
 */
export class ViewStore {
  private payload: ViewPayload | null = null;
  private listeners: Array<(p: ViewPayload) => void> = [];

  get current(): ViewPayload | null {
    return this.payload;
  }

  get revision(): number {
    return this.payload ? this.payload.view.revision : -1;
  }

  /** Returns true when the payload became the new current view. */
  apply(payload: ViewPayload): boolean {
    if (this.payload !== null && payload.view.revision <= this.revision) {
      return false;
    }
    this.payload = payload;
    for (const fn of this.listeners) fn(payload);
    return true;
  }

  /** Unconditional replacement, for fresh session loads only. */
  reset(payload: ViewPayload): void {
    this.payload = payload;
    for (const fn of this.listeners) fn(payload);
  }

  subscribe(fn: (p: ViewPayload) => void): void {
    this.listeners.push(fn);
  }
}
