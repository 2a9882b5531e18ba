/**
 * Status panel: alert counts by lifecycle column, command counts by state,
 * active ruleset summary, and per-feed sync status.
 */

import { ConsoleState, countsByCommandState, countsByStatus } from "../state.js";
import { ALERT_STATUS_ORDER } from "../types.js";
import { clear, formatTimestamp, h } from "./dom.js";

export function renderStats(root: HTMLElement, state: ConsoleState): void {
  clear(root);

  const alertCounts = countsByStatus(state);
  const alertsCard = h(
    "section",
    { class: "stats-card", dataset: { stats: "alerts" } },
    h("h2", { text: "Alerts by status" }),
  );
  for (const status of ALERT_STATUS_ORDER) {
    alertsCard.append(
      h(
        "div",
        { class: "stat-row", dataset: { status } },
        h("span", { class: "stat-label", text: status }),
        h("span", { class: "stat-value", text: String(alertCounts[status]) }),
      ),
    );
  }

  const commandCounts = countsByCommandState(state);
  const commandsCard = h(
    "section",
    { class: "stats-card", dataset: { stats: "commands" } },
    h("h2", { text: "Commands by state" }),
  );
  const states = Object.keys(commandCounts).sort();
  if (states.length === 0) {
    commandsCard.append(h("p", { class: "queue-empty", text: "no commands yet" }));
  }
  for (const name of states) {
    commandsCard.append(
      h(
        "div",
        { class: "stat-row", dataset: { commandState: name } },
        h("span", { class: "stat-label", text: name }),
        h("span", { class: "stat-value", text: String(commandCounts[name]) }),
      ),
    );
  }

  const rulesCard = h(
    "section",
    { class: "stats-card", dataset: { stats: "rules" } },
    h("h2", { text: "Active ruleset" }),
  );
  if (state.rules) {
    rulesCard.append(
      h("div", { class: "stat-row" },
        h("span", { class: "stat-label", text: "version" }),
        h("span", { class: "stat-value", text: state.rules.version ?? "none" }),
      ),
      h("div", { class: "stat-row" },
        h("span", { class: "stat-label", text: "rules loaded" }),
        h("span", { class: "stat-value", text: String(state.rules.rules.length) }),
      ),
    );
  } else {
    rulesCard.append(h("p", { class: "queue-empty", text: "ruleset not loaded" }));
  }

  const feedsCard = h(
    "section",
    { class: "stats-card", dataset: { stats: "feeds" } },
    h("h2", { text: "Feeds" }),
  );
  if (state.feeds.length === 0) {
    feedsCard.append(h("p", { class: "queue-empty", text: "no feeds configured" }));
  }
  for (const feed of state.feeds) {
    const status = feed.status;
    const summary = status
      ? status.error
        ? `error: ${status.error}`
        : `synced ${formatTimestamp(status.last_sync)} · +${status.added} / ~${status.updated}`
      : "never synced";
    feedsCard.append(
      h(
        "div",
        { class: "feed-row", dataset: { feed: feed.source_id } },
        h("span", { class: "stat-label", text: `${feed.source_id} (tier ${feed.trust_tier})` }),
        h("span", {
          class: "stat-value" + (status?.error ? " feed-error" : ""),
          text: feed.enabled ? summary : "disabled",
        }),
      ),
    );
  }

  root.append(alertsCard, commandsCard, rulesCard, feedsCard);
}
