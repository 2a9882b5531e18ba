/** Console session: who is talking to the API and what they may mutate. */

import type { AlertDoc } from "./types.js";

export type Role = "admin" | "analyst";

export interface ConsoleSession {
  /** API origin, e.g. "http://127.0.0.1:8787"; empty string when same-origin. */
  baseUrl: string;
  token: string;
  role: Role;
  /** Display name; analysts match it against alert assignees. */
  operator: string;
}

/**
 * Admins triage any alert. Analysts may change status or assignment only on
 * alerts currently assigned to them.
 */
export function canTriageAlert(session: ConsoleSession, alert: AlertDoc): boolean {
  if (session.role === "admin") return true;
  return alert.assignee !== null && alert.assignee === session.operator;
}

export function canDecideCommands(session: ConsoleSession): boolean {
  return session.role === "admin";
}

export function canEditAssetMap(session: ConsoleSession): boolean {
  return session.role === "admin";
}

export function canSyncFeeds(session: ConsoleSession): boolean {
  return session.role === "admin";
}
