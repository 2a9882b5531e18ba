/** Wire documents exactly as the platform API emits them. */

export type AlertStatus = "new" | "ongoing" | "complete";

export interface AlertEventDoc {
  received_at: string;
  source_host: string;
  program: string | null;
  message: string;
  decoder: string;
  fields: Record<string, string>;
}

export interface AlertDoc {
  alert_id: string;
  raised_at: string;
  rule_id: string;
  level: number;
  threat_type: string;
  threat_group: string;
  event: AlertEventDoc;
  count: number;
  status: AlertStatus;
  assignee: string | null;
  last_event_at: string | null;
  signature: unknown;
}

export type CommandMode = "recommend" | "approve" | "auto";

export type CommandStateName =
  | "recommended"
  | "pending_approval"
  | "approved"
  | "rejected_as_recommendation"
  | "executed"
  | "failed";

export interface CommandDoc {
  command_id: string;
  alert_id: string;
  policy_id: string;
  rendered_cli: string;
  target_node: string;
  mode: CommandMode;
  state: CommandStateName;
  created_at: string;
  decided_at: string | null;
  decided_by: string | null;
  executed_at: string | null;
  transcript: string | null;
  command_human?: string | null;
}

export type RiskLevel = "low" | "medium" | "high" | "critical";

export interface AssetServiceDoc {
  name: string;
  version?: string;
  ports?: number[];
}

export interface AssetDependencyDoc {
  target: string;
  kind: "structural" | "procedural" | "data";
}

export interface AssetGeoDoc {
  country_code?: string;
  site_label?: string;
}

export interface AssetNodeDoc {
  node_id: string;
  label: string;
  risk_level: RiskLevel;
  group?: string;
  tags?: string[];
  function?: string;
  services?: AssetServiceDoc[];
  addresses?: string[];
  hostnames?: string[];
  geolocation?: AssetGeoDoc;
  dependencies?: AssetDependencyDoc[];
}

export interface AssetEdgeDoc {
  source: string;
  target: string;
  relation: "link" | "depends_on";
}

export interface AssetMapDoc {
  schema: string;
  map_id: string;
  revision: number;
  nodes: AssetNodeDoc[];
  edges: AssetEdgeDoc[];
}

export interface HealthDoc {
  status: string;
  rules_version: string | null;
  rules_loaded: number;
  alerts: number;
}

export interface RuleSummaryDoc {
  rule_id: string;
  origin: string;
  level: number;
  threat_type: string;
  threat_group: string;
}

export interface RulesDoc {
  version: string | null;
  manifest: Record<string, string>;
  rules: RuleSummaryDoc[];
}

export interface FeedStatusDoc {
  last_sync: string;
  indicators: number;
  added: number;
  updated: number;
  error: string | null;
}

export interface FeedDoc {
  source_id: string;
  location: string;
  kind: string;
  trust_tier: number;
  poll_interval: number;
  enabled: boolean;
  status: FeedStatusDoc | null;
}

export interface ApiErrorDoc {
  error: string;
  message: string;
}

export type StreamEventName =
  | "alert.created"
  | "alert.updated"
  | "command.created"
  | "command.updated";

export const ALERT_STATUS_ORDER: readonly AlertStatus[] = ["new", "ongoing", "complete"];

const STATUS_RANK: Record<AlertStatus, number> = { new: 0, ongoing: 1, complete: 2 };

/** Alerts only ever move forward through new -> ongoing -> complete. */
export function isForwardMove(from: AlertStatus, to: AlertStatus): boolean {
  return STATUS_RANK[to] > STATUS_RANK[from];
}

/** The single next status on the forward-only lifecycle, if any. */
export function nextStatus(status: AlertStatus): AlertStatus | null {
  switch (status) {
    case "new":
      return "ongoing";
    case "ongoing":
      return "complete";
    case "complete":
      return null;
  }
}
