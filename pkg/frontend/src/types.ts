// Wire types for the explanation service. These mirror the JSON payloads
// recorded in fixtures/ -- the only contract between frontend and backend.

export interface ApiErrorBody {
  code: string;
  message: string;
  fields?: string[];
}

export interface Envelope<T> {
  ok: boolean;
  data?: T;
  error?: ApiErrorBody;
}

export type FeatureKind = "numeric" | "categorical";

export interface FeatureDoc {
  name: string;
  kind: FeatureKind;
  domain: Array<number | string>;
}

export interface SchemaDoc {
  features: FeatureDoc[];
  target: { name: string; classes: string[] };
}

export interface ModelInfo {
  model_id: string;
  schema: SchemaDoc;
  training_accuracy: number | null;
}

export interface ClusterEntry {
  class: string;
  count: number;
}

export interface SuperleafSummaryDoc {
  node_id: number;
  cluster: ClusterEntry[];
  label: string;
  majority_class: string;
  purity: number;
  subtree_leaves: number;
  subtree_depth: number;
}

export interface FrontierNode {
  node_id: number;
  kind: "leaf" | "superleaf";
  summary: SuperleafSummaryDoc;
}

export interface ViewDoc {
  tree_id: string;
  expanded: number[];
  revision: number;
}

export interface TreeNodeDoc {
  depth: number;
  children: number[];
  n_support: number;
}

export interface ViewPayload {
  view: ViewDoc;
  frontier: FrontierNode[];
  nodes: Record<string, TreeNodeDoc>;
}

export interface SessionCreated extends ViewPayload {
  session_id: string;
}

export interface PredictResponse {
  class: string;
  proba: Record<string, number>;
}

export interface CfChange {
  feature: string;
  old: number | string;
  new: number | string;
}

export interface CfResult {
  instance: Record<string, number | string>;
  changes: CfChange[];
  distance: number;
  sparsity: number;
  rank: number;
}

export interface CfStats {
  engine: string;
  candidates_evaluated: number;
  partial: boolean;
  exhausted: boolean;
  wall_time_ms?: number;
}

export interface CfQueryDoc {
  instance: Record<string, number | string>;
  target_class: string;
  epsilon?: number;
  lock?: string[];
  force_change?: string[];
  ranges?: Record<string, Array<number | string>>;
  max_results?: number;
  time_budget_ms?: number;
}

export interface CfResponse {
  query: CfQueryDoc;
  results: CfResult[];
  stats: CfStats;
}

export interface EdgeCaseDoc {
  instance: Record<string, number | string>;
  predicted: string;
  truth: string;
  risk: number;
  distance_to_query: number | null;
  synthetic: boolean;
  truth_source: string;
  index: number | null;
}

export interface EdgeHistogram {
  edges: number[];
  counts: number[];
}

export interface EdgeSummaryDoc {
  count: number;
  confusion: number[][];
  histogram: EdgeHistogram;
  top_features: Array<{ feature: string; gain: number; rule: string }>;
}

export interface EdgeResponse {
  cases: EdgeCaseDoc[];
  summary: EdgeSummaryDoc;
}

export interface RouteResponse {
  node_id: number;
  cluster: ClusterEntry[];
}
