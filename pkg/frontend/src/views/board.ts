/**
 * Alert triage board: three lifecycle columns (new / ongoing / complete).
 * Moves are forward-only; a conflicting move snaps back with an inline
 * reason. Stream events re-render cards in place — no refresh.
 */

import { canTriageAlert, ConsoleSession } from "../session.js";
import { AlertCard, boardColumns, ConsoleState } from "../state.js";
import type { AlertStatus } from "../types.js";
import { ALERT_STATUS_ORDER, nextStatus } from "../types.js";
import { clear, formatTimestamp, h } from "./dom.js";

export interface BoardHandlers {
  moveAlert: (alertId: string, to: AlertStatus) => void;
  assignAlert: (alertId: string, assignee: string | null) => void;
  clearCardError: (alertId: string) => void;
}

const COLUMN_TITLES: Record<AlertStatus, string> = {
  new: "New",
  ongoing: "Ongoing",
  complete: "Complete",
};

const MOVE_LABELS: Record<AlertStatus, string> = {
  new: "",
  ongoing: "Start work",
  complete: "Mark complete",
};

function levelClass(level: number): string {
  if (level >= 12) return "level-critical";
  if (level >= 9) return "level-high";
  if (level >= 6) return "level-medium";
  return "level-low";
}

function renderCard(
  card: AlertCard,
  session: ConsoleSession,
  handlers: BoardHandlers,
  highlighted: boolean,
): HTMLElement {
  const { alert } = card;
  const classes = ["alert-card"];
  if (card.pending) classes.push("pending");
  if (highlighted) classes.push("highlighted");

  const header = h(
    "div",
    { class: "card-header" },
    h("span", { class: `level-badge ${levelClass(alert.level)}`, text: `L${alert.level}` }),
    h("span", { class: "threat-type", text: alert.threat_type }),
    alert.count > 1 ? h("span", { class: "count-badge", text: `×${alert.count}` }) : null,
  );

  const meta = h(
    "div",
    { class: "card-meta" },
    h("span", { class: "meta-item", text: alert.event.source_host }),
    h("span", { class: "meta-item", text: alert.rule_id }),
    h("span", { class: "meta-item", text: formatTimestamp(alert.raised_at) }),
  );

  const body = h("div", { class: "card-message", text: alert.event.message });

  const assigneeRow = h(
    "div",
    { class: "card-assignee" },
    h("span", {
      class: "assignee-label",
      text: alert.assignee ? `assigned: ${alert.assignee}` : "unassigned",
    }),
  );

  const children: (HTMLElement | null)[] = [header, meta, body, assigneeRow];

  if (card.error) {
    children.push(
      h(
        "div",
        { class: "card-error" },
        h("span", { class: "card-error-text", text: card.error }),
        h("button", {
          class: "dismiss",
          text: "dismiss",
          onClick: () => handlers.clearCardError(alert.alert_id),
        }),
      ),
    );
  }

  if (canTriageAlert(session, alert)) {
    const actions = h("div", { class: "card-actions" });
    const target = nextStatus(alert.status);
    if (target && !card.pending) {
      actions.append(
        h("button", {
          class: "move-button",
          text: MOVE_LABELS[target],
          dataset: { move: target },
          onClick: () => handlers.moveAlert(alert.alert_id, target),
        }),
      );
    }
    if (card.pending) {
      actions.append(h("span", { class: "saving", text: "saving…" }));
    }
    const assignInput = h("input", {
      class: "assign-input",
      type: "text",
      placeholder: "analyst name",
      value: alert.assignee ?? "",
    });
    actions.append(
      assignInput,
      h("button", {
        class: "assign-button",
        text: "Assign",
        onClick: () => handlers.assignAlert(alert.alert_id, assignInput.value.trim() || null),
      }),
    );
    children.push(actions);
  }

  return h(
    "article",
    { class: classes.join(" "), dataset: { alertId: alert.alert_id, status: card.displayStatus } },
    ...children,
  );
}

export function renderBoard(
  root: HTMLElement,
  state: ConsoleState,
  session: ConsoleSession,
  handlers: BoardHandlers,
): void {
  clear(root);
  const columns = boardColumns(state);
  const board = h("div", { class: "board" });
  for (const status of ALERT_STATUS_ORDER) {
    const cards = columns[status];
    const column = h(
      "section",
      { class: "board-column", dataset: { column: status } },
      h(
        "header",
        { class: "column-header" },
        h("h2", { text: COLUMN_TITLES[status] }),
        h("span", { class: "column-count", text: String(cards.length) }),
      ),
    );
    const list = h("div", { class: "column-cards" });
    for (const card of cards) {
      list.append(
        renderCard(card, session, handlers, state.ui.highlightAlert === card.alert.alert_id),
      );
    }
    if (cards.length === 0) {
      list.append(h("p", { class: "column-empty", text: "no alerts" }));
    }
    column.append(list);
    board.append(column);
  }
  root.append(board);
}
