/**
 * Bridges user intent and the API: every mutation goes to the server and the
 * store only ever keeps what the server (or its event stream) answered.
 * Status moves are the one optimistic path — pinned in the view while the
 * PATCH is in flight, dropped (snap-back) with an inline reason on conflict.
 */

import { ApiClient, ApiError } from "./api.js";
import type { ConsoleSession } from "./session.js";
import { ConsoleStore } from "./state.js";
import { openStream, StreamHandle } from "./sse.js";
import type { AlertDoc, AlertStatus, CommandDoc } from "./types.js";
import { isForwardMove } from "./types.js";

function errorText(error: unknown): string {
  if (error instanceof ApiError) return error.message;
  if (error instanceof Error) return error.message;
  return String(error);
}

export class ConsoleController {
  constructor(
    public readonly session: ConsoleSession,
    public readonly store: ConsoleStore,
    public readonly api: ApiClient,
    private readonly streamRetryMs = 2000,
  ) {}

  /** Fetch every snapshot the console renders from. */
  async loadSnapshots(): Promise<void> {
    const results = await Promise.allSettled([
      this.api.listAlerts(),
      this.api.listCommands(),
      this.api.assetMap(),
      this.api.rules(),
      this.api.feeds(),
      this.api.health(),
    ]);
    const [alerts, commands, map, rules, feeds, health] = results;
    if (alerts.status === "fulfilled") {
      this.store.dispatch({ type: "snapshot.alerts", alerts: alerts.value });
    }
    if (commands.status === "fulfilled") {
      this.store.dispatch({ type: "snapshot.commands", commands: commands.value });
    }
    if (map.status === "fulfilled") {
      this.store.dispatch({ type: "snapshot.assetmap", map: map.value });
    }
    if (rules.status === "fulfilled") {
      this.store.dispatch({ type: "snapshot.rules", rules: rules.value });
    }
    if (feeds.status === "fulfilled") {
      this.store.dispatch({ type: "snapshot.feeds", feeds: feeds.value });
    }
    if (health.status === "fulfilled") {
      this.store.dispatch({ type: "snapshot.health", health: health.value });
    }
    const failure = results.find((r) => r.status === "rejected");
    if (failure && failure.status === "rejected") {
      this.store.dispatch({ type: "error", message: errorText(failure.reason) });
    }
  }

  /**
   * Move an alert forward on the board. Optimistic: the card shows the target
   * column immediately; a conflict snaps it back with the server's reason.
   */
  async moveAlert(alertId: string, to: AlertStatus): Promise<void> {
    const alert = this.store.getState().alerts[alertId];
    if (!alert) return;
    if (!isForwardMove(alert.status, to)) {
      this.store.dispatch({
        type: "move.rejected",
        alertId,
        reason: `alerts only move forward (new → ongoing → complete); ${alert.status} → ${to} is not allowed`,
      });
      return;
    }
    this.store.dispatch({ type: "move.optimistic", alertId, to });
    try {
      const updated = await this.api.patchAlert(alertId, { status: to });
      this.store.dispatch({ type: "move.confirmed", alert: updated });
    } catch (error) {
      this.store.dispatch({ type: "move.rejected", alertId, reason: errorText(error) });
    }
  }

  /** Assign (or unassign) an alert; applied only once the server confirms. */
  async assignAlert(alertId: string, assignee: string | null): Promise<void> {
    try {
      const updated = await this.api.patchAlert(alertId, { assignee });
      this.store.dispatch({ type: "alert.upsert", alert: updated });
    } catch (error) {
      this.store.dispatch({ type: "move.rejected", alertId, reason: errorText(error) });
    }
  }

  /**
   * Approve or reject a pending command. Never optimistic: buttons disable
   * while the verdict is in flight. A conflict means the entry went stale, so
   * the command list is refreshed to show its real state.
   */
  async decide(commandId: string, verdict: "approved" | "rejected"): Promise<void> {
    this.store.dispatch({ type: "verdict.begin", commandId });
    try {
      const updated = await this.api.verdict(commandId, verdict);
      this.store.dispatch({ type: "verdict.done", commandId, command: updated });
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        try {
          const commands = await this.api.listCommands();
          this.store.dispatch({ type: "snapshot.commands", commands });
        } catch {
          // keep whatever state we have; the error banner below explains
        }
      }
      this.store.dispatch({ type: "verdict.done", commandId, error: errorText(error) });
    }
  }

  /**
   * Subscribe to the live event stream. On every (re)connect the snapshots
   * are refetched so nothing missed during a gap can linger.
   */
  startStream(): StreamHandle {
    this.store.dispatch({ type: "connection", state: "connecting" });
    return openStream(this.api.streamUrl(), this.api.streamHeaders(), {
      fetchImpl: this.api.fetchImpl,
      retryDelayMs: this.streamRetryMs,
      onConnect: () => {
        this.store.dispatch({ type: "connection", state: "live" });
        void this.loadSnapshots();
      },
      onDisconnect: () => {
        this.store.dispatch({ type: "connection", state: "retrying" });
      },
      onFrame: (frame) => {
        let payload: unknown;
        try {
          payload = JSON.parse(frame.data);
        } catch {
          return;
        }
        switch (frame.event) {
          case "alert.created":
          case "alert.updated":
            this.store.dispatch({ type: "alert.upsert", alert: payload as AlertDoc });
            break;
          case "command.created":
          case "command.updated":
            this.store.dispatch({ type: "command.upsert", command: payload as CommandDoc });
            break;
          default:
            break;
        }
      },
    });
  }
}
