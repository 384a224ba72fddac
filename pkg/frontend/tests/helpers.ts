import { vi } from "vitest";

export interface Fixture {
  status: number;
  body: unknown;
}

export type Route = [method: string, pattern: RegExp, fixture: Fixture];

/** Installs a fetch mock that answers from recorded fixtures. */
export function installFetch(routes: Route[]): ReturnType<typeof vi.fn> {
  const mock = vi.fn(async (url: string | URL, init?: RequestInit) => {
    const method = (init?.method ?? "GET").toUpperCase();
    const path = String(url);
    for (const [m, pattern, fixture] of routes) {
      if (m.toUpperCase() === method && pattern.test(path)) {
        return new Response(JSON.stringify(fixture.body), {
          status: fixture.status,
          headers: { "Content-Type": "application/json" },
        });
      }
    }
    throw new Error(`no fixture route for ${method} ${path}`);
  });
  vi.stubGlobal("fetch", mock);
  return mock;
}

export function dataOf<T>(fixture: Fixture): T {
  return (fixture.body as { data: T }).data;
}
