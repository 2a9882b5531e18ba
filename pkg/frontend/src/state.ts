/**
 * Single state store for the console. Stream events and user actions merge
 * through one pure reducer.
 *
 * Every document held in the store is byte-for-byte what the API or the
 * event stream last sent — the store never fabricates entity state. The one
 * sanctioned exception, optimistic status moves, is kept out of the documents
 * entirely: a pending move is a presentation pin applied by the board
 * selector, so rolling back is simply dropping the pin.
 */

import type {
  AlertDoc,
  AlertStatus,
  AssetMapDoc,
  CommandDoc,
  FeedDoc,
  HealthDoc,
  RulesDoc,
} from "./types.js";
import { ALERT_STATUS_ORDER } from "./types.js";

export type ConnectionState = "idle" | "connecting" | "live" | "retrying";

export type TabName = "board" | "approvals" | "assets" | "status";

export interface PendingMove {
  from: AlertStatus;
  to: AlertStatus;
}

export interface UiState {
  tab: TabName;
  selectedNode: string | null;
  highlightAlert: string | null;
}

export interface ConsoleState {
  alerts: Record<string, AlertDoc>;
  commands: Record<string, CommandDoc>;
  assetMap: AssetMapDoc | null;
  rules: RulesDoc | null;
  feeds: FeedDoc[];
  health: HealthDoc | null;
  connection: ConnectionState;
  pendingMoves: Record<string, PendingMove>;
  cardErrors: Record<string, string>;
  verdictsInFlight: Record<string, true>;
  lastError: string | null;
  ui: UiState;
}

export type Action =
  | { type: "snapshot.alerts"; alerts: AlertDoc[] }
  | { type: "snapshot.commands"; commands: CommandDoc[] }
  | { type: "snapshot.assetmap"; map: AssetMapDoc }
  | { type: "snapshot.rules"; rules: RulesDoc }
  | { type: "snapshot.feeds"; feeds: FeedDoc[] }
  | { type: "snapshot.health"; health: HealthDoc }
  | { type: "alert.upsert"; alert: AlertDoc }
  | { type: "command.upsert"; command: CommandDoc }
  | { type: "connection"; state: ConnectionState }
  | { type: "move.optimistic"; alertId: string; to: AlertStatus }
  | { type: "move.confirmed"; alert: AlertDoc }
  | { type: "move.rejected"; alertId: string; reason: string }
  | { type: "card.error.clear"; alertId: string }
  | { type: "verdict.begin"; commandId: string }
  | { type: "verdict.done"; commandId: string; command?: CommandDoc; error?: string }
  | { type: "error"; message: string | null }
  | { type: "ui.tab"; tab: TabName }
  | { type: "ui.selectNode"; nodeId: string | null }
  | { type: "ui.highlightAlert"; alertId: string | null };

export function initialState(): ConsoleState {
  return {
    alerts: {},
    commands: {},
    assetMap: null,
    rules: null,
    feeds: [],
    health: null,
    connection: "idle",
    pendingMoves: {},
    cardErrors: {},
    verdictsInFlight: {},
    lastError: null,
    ui: { tab: "board", selectedNode: null, highlightAlert: null },
  };
}

function byId<T>(items: T[], key: (item: T) => string): Record<string, T> {
  const out: Record<string, T> = {};
  for (const item of items) out[key(item)] = item;
  return out;
}

function without<T>(record: Record<string, T>, key: string): Record<string, T> {
  if (!(key in record)) return record;
  const { [key]: _dropped, ...rest } = record;
  return rest;
}

export function reduce(state: ConsoleState, action: Action): ConsoleState {
  switch (action.type) {
    case "snapshot.alerts":
      return { ...state, alerts: byId(action.alerts, (a) => a.alert_id) };
    case "snapshot.commands":
      return { ...state, commands: byId(action.commands, (c) => c.command_id) };
    case "snapshot.assetmap":
      return { ...state, assetMap: action.map };
    case "snapshot.rules":
      return { ...state, rules: action.rules };
    case "snapshot.feeds":
      return { ...state, feeds: action.feeds };
    case "snapshot.health":
      return { ...state, health: action.health };

    case "alert.upsert":
      return {
        ...state,
        alerts: { ...state.alerts, [action.alert.alert_id]: action.alert },
      };
    case "command.upsert":
      return {
        ...state,
        commands: { ...state.commands, [action.command.command_id]: action.command },
      };

    case "connection":
      return { ...state, connection: action.state };

    case "move.optimistic": {
      const alert = state.alerts[action.alertId];
      if (!alert || state.pendingMoves[action.alertId]) return state;
      return {
        ...state,
        pendingMoves: {
          ...state.pendingMoves,
          [action.alertId]: { from: alert.status, to: action.to },
        },
        cardErrors: without(state.cardErrors, action.alertId),
      };
    }
    case "move.confirmed":
      return {
        ...state,
        alerts: { ...state.alerts, [action.alert.alert_id]: action.alert },
        pendingMoves: without(state.pendingMoves, action.alert.alert_id),
      };
    case "move.rejected":
      return {
        ...state,
        pendingMoves: without(state.pendingMoves, action.alertId),
        cardErrors: { ...state.cardErrors, [action.alertId]: action.reason },
      };
    case "card.error.clear":
      return { ...state, cardErrors: without(state.cardErrors, action.alertId) };

    case "verdict.begin":
      return {
        ...state,
        verdictsInFlight: { ...state.verdictsInFlight, [action.commandId]: true },
      };
    case "verdict.done": {
      const next: ConsoleState = {
        ...state,
        verdictsInFlight: without(state.verdictsInFlight, action.commandId),
        lastError: action.error ?? state.lastError,
      };
      if (action.command) {
        next.commands = { ...state.commands, [action.command.command_id]: action.command };
      }
      return next;
    }

    case "error":
      return { ...state, lastError: action.message };

    case "ui.tab":
      return { ...state, ui: { ...state.ui, tab: action.tab } };
    case "ui.selectNode":
      return { ...state, ui: { ...state.ui, selectedNode: action.nodeId } };
    case "ui.highlightAlert":
      return { ...state, ui: { ...state.ui, highlightAlert: action.alertId } };
  }
}

// --- selectors ---------------------------------------------------------------

export interface AlertCard {
  alert: AlertDoc;
  /** Status shown on the board: the optimistic target while a move is pending. */
  displayStatus: AlertStatus;
  pending: boolean;
  error: string | null;
}

export type BoardColumns = Record<AlertStatus, AlertCard[]>;

/** Alerts grouped into the three lifecycle columns, newest first. */
export function boardColumns(state: ConsoleState): BoardColumns {
  const columns: BoardColumns = { new: [], ongoing: [], complete: [] };
  for (const alert of Object.values(state.alerts)) {
    const pending = state.pendingMoves[alert.alert_id];
    columns[pending ? pending.to : alert.status].push({
      alert,
      displayStatus: pending ? pending.to : alert.status,
      pending: pending !== undefined,
      error: state.cardErrors[alert.alert_id] ?? null,
    });
  }
  for (const status of ALERT_STATUS_ORDER) {
    columns[status].sort(
      (a, b) =>
        b.alert.raised_at.localeCompare(a.alert.raised_at) ||
        a.alert.alert_id.localeCompare(b.alert.alert_id),
    );
  }
  return columns;
}

function byCreationDesc(a: CommandDoc, b: CommandDoc): number {
  return b.created_at.localeCompare(a.created_at) || a.command_id.localeCompare(b.command_id);
}

/** Commands awaiting an operator verdict, oldest first (triage order). */
export function approvalQueue(state: ConsoleState): CommandDoc[] {
  return Object.values(state.commands)
    .filter((c) => c.state === "pending_approval")
    .sort((a, b) => -byCreationDesc(a, b));
}

/** Recommend-mode output plus rejected commands: advice, never executed. */
export function recommendations(state: ConsoleState): CommandDoc[] {
  return Object.values(state.commands)
    .filter((c) => c.state === "recommended" || c.state === "rejected_as_recommendation")
    .sort(byCreationDesc);
}

/** Commands that ran (or tried to): terminal outcomes with transcripts. */
export function executionLog(state: ConsoleState): CommandDoc[] {
  return Object.values(state.commands)
    .filter((c) => c.state === "executed" || c.state === "failed")
    .sort(byCreationDesc);
}

export function countsByStatus(state: ConsoleState): Record<AlertStatus, number> {
  const counts: Record<AlertStatus, number> = { new: 0, ongoing: 0, complete: 0 };
  for (const alert of Object.values(state.alerts)) counts[alert.status] += 1;
  return counts;
}

export function countsByCommandState(state: ConsoleState): Record<string, number> {
  const counts: Record<string, number> = {};
  for (const command of Object.values(state.commands)) {
    counts[command.state] = (counts[command.state] ?? 0) + 1;
  }
  return counts;
}

// --- store -------------------------------------------------------------------

export type Listener = (state: ConsoleState) => void;

export class ConsoleStore {
  private state: ConsoleState;
  private listeners = new Set<Listener>();

  constructor(state: ConsoleState = initialState()) {
    this.state = state;
  }

  getState(): ConsoleState {
    return this.state;
  }

  dispatch(action: Action): void {
    this.state = reduce(this.state, action);
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }
}
