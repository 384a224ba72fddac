import type {
  ApiErrorBody,
  CfQueryDoc,
  CfResponse,
  EdgeResponse,
  Envelope,
  ModelInfo,
  PredictResponse,
  RouteResponse,
  SessionCreated,
  ViewPayload,
} from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(body.message);
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  const envelope = (await resp.json()) as Envelope<T>;
  if (!resp.ok || !envelope.ok || envelope.data === undefined) {
    const body = envelope.error ?? { code: "unknown", message: resp.statusText };
    throw new ApiError(resp.status, body);
  }
  return envelope.data;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async post<T>(path: string, payload: unknown,
                        signal?: AbortSignal): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
      signal,
    });
    return unwrap<T>(resp);
  }

  private async get<T>(path: string, signal?: AbortSignal): Promise<T> {
    const resp = await fetch(this.baseUrl + path, { signal });
    return unwrap<T>(resp);
  }

  modelSchema(modelId: string): Promise<ModelInfo> {
    return this.get(`/models/${modelId}/schema`);
  }

  predict(modelId: string, instance: Record<string, unknown>,
          signal?: AbortSignal): Promise<PredictResponse> {
    return this.post(`/models/${modelId}/predict`, { instance }, signal);
  }

  createSession(modelId: string): Promise<SessionCreated> {
    return this.post("/sessions", { model_id: modelId });
  }

  tree(sessionId: string): Promise<ViewPayload> {
    return this.get(`/sessions/${sessionId}/tree`);
  }

  toggle(sessionId: string, nodeId: number,
         revision: number): Promise<ViewPayload> {
    return this.post(`/sessions/${sessionId}/tree/toggle`, {
      node_id: nodeId,
      revision,
    });
  }

  route(sessionId: string,
        instance: Record<string, unknown>): Promise<RouteResponse> {
    return this.post(`/sessions/${sessionId}/tree/route`, { instance });
  }

  counterfactuals(modelId: string, query: CfQueryDoc,
                  signal?: AbortSignal): Promise<CfResponse> {
    return this.post(`/models/${modelId}/counterfactuals`, query, signal);
  }

  edgeCases(modelId: string, risk: unknown, criterion: unknown, bins: number,
            signal?: AbortSignal): Promise<EdgeResponse> {
    return this.post(`/models/${modelId}/edge-cases`,
                     { risk, criterion, bins }, signal);
  }
}
