/**
 * Approval queue: commands parked at pending_approval, with the policy's
 * human summary up front and the exact CLI on expand. Verdict buttons are
 * admin-only. Below the queue: recommendations (advice that never executes)
 * and the execution log with transcripts.
 */

import { canDecideCommands, ConsoleSession } from "../session.js";
import { approvalQueue, ConsoleState, executionLog, recommendations } from "../state.js";
import type { CommandDoc } from "../types.js";
import { clear, formatTimestamp, h } from "./dom.js";

export interface QueueHandlers {
  decide: (commandId: string, verdict: "approved" | "rejected") => void;
  openAlert: (alertId: string) => void;
}

function commandTitle(command: CommandDoc): string {
  return command.command_human ?? command.rendered_cli;
}

function detailRows(command: CommandDoc): HTMLElement {
  return h(
    "div",
    { class: "command-details" },
    h("code", { class: "rendered-cli", text: command.rendered_cli }),
    h("dl", { class: "command-fields" },
      h("dt", { text: "policy" }),
      h("dd", { text: command.policy_id }),
      h("dt", { text: "mode" }),
      h("dd", { text: command.mode }),
      h("dt", { text: "created" }),
      h("dd", { text: formatTimestamp(command.created_at) }),
    ),
  );
}

function commandEntry(
  command: CommandDoc,
  session: ConsoleSession,
  handlers: QueueHandlers,
  inFlight: boolean,
): HTMLElement {
  const headline = h(
    "div",
    { class: "command-headline" },
    h("span", { class: "command-human", text: commandTitle(command) }),
    h("span", { class: "target-chip", text: command.target_node }),
    h("a", {
      class: "alert-link",
      href: `#alert-${command.alert_id}`,
      text: `alert ${command.alert_id.slice(0, 8)}`,
      onClick: (event) => {
        event.preventDefault();
        handlers.openAlert(command.alert_id);
      },
    }),
  );

  const details = h(
    "details",
    { class: "command-expand" },
    h("summary", { text: "show command" }),
    detailRows(command),
  );

  const entry = h(
    "article",
    { class: "command-entry", dataset: { commandId: command.command_id, state: command.state } },
    headline,
    details,
  );

  if (command.state === "pending_approval" && canDecideCommands(session)) {
    entry.append(
      h(
        "div",
        { class: "verdict-actions" },
        h("button", {
          class: "approve-button",
          text: "Approve",
          disabled: inFlight,
          onClick: () => handlers.decide(command.command_id, "approved"),
        }),
        h("button", {
          class: "reject-button",
          text: "Reject",
          disabled: inFlight,
          onClick: () => handlers.decide(command.command_id, "rejected"),
        }),
        inFlight ? h("span", { class: "saving", text: "deciding…" }) : null,
      ),
    );
  }
  return entry;
}

function recommendationEntry(command: CommandDoc): HTMLElement {
  const note =
    command.state === "rejected_as_recommendation"
      ? `rejected by ${command.decided_by ?? "?"} at ${formatTimestamp(command.decided_at)}`
      : "recommend-mode policy: advisory only";
  return h(
    "article",
    { class: "command-entry", dataset: { commandId: command.command_id, state: command.state } },
    h(
      "div",
      { class: "command-headline" },
      h("span", { class: "command-human", text: commandTitle(command) }),
      h("span", { class: "target-chip", text: command.target_node }),
    ),
    h("code", { class: "rendered-cli", text: command.rendered_cli }),
    h("p", { class: "recommendation-note", text: note }),
  );
}

function executionEntry(command: CommandDoc): HTMLElement {
  return h(
    "article",
    { class: "command-entry", dataset: { commandId: command.command_id, state: command.state } },
    h(
      "div",
      { class: "command-headline" },
      h("span", { class: `state-badge state-${command.state}`, text: command.state }),
      h("span", { class: "command-human", text: commandTitle(command) }),
      h("span", { class: "target-chip", text: command.target_node }),
      h("span", { class: "meta-item", text: formatTimestamp(command.executed_at) }),
    ),
    h("code", { class: "rendered-cli", text: command.rendered_cli }),
    command.transcript !== null
      ? h("pre", { class: "transcript", text: command.transcript })
      : null,
  );
}

export function renderQueue(
  root: HTMLElement,
  state: ConsoleState,
  session: ConsoleSession,
  handlers: QueueHandlers,
): void {
  clear(root);

  const pending = approvalQueue(state);
  const pendingSection = h(
    "section",
    { class: "queue-section", dataset: { section: "pending" } },
    h("h2", { text: `Awaiting approval (${pending.length})` }),
  );
  if (pending.length === 0) {
    pendingSection.append(h("p", { class: "queue-empty", text: "no commands waiting" }));
  }
  for (const command of pending) {
    pendingSection.append(
      commandEntry(command, session, handlers, command.command_id in state.verdictsInFlight),
    );
  }

  const advice = recommendations(state);
  const adviceSection = h(
    "section",
    { class: "queue-section", dataset: { section: "recommendations" } },
    h("h2", { text: `Recommendations (${advice.length})` }),
  );
  if (advice.length === 0) {
    adviceSection.append(h("p", { class: "queue-empty", text: "no recommendations" }));
  }
  for (const command of advice) adviceSection.append(recommendationEntry(command));

  const ran = executionLog(state);
  const ranSection = h(
    "section",
    { class: "queue-section", dataset: { section: "executions" } },
    h("h2", { text: `Execution log (${ran.length})` }),
  );
  if (ran.length === 0) {
    ranSection.append(h("p", { class: "queue-empty", text: "nothing executed yet" }));
  }
  for (const command of ran) ranSection.append(executionEntry(command));

  root.append(pendingSection, adviceSection, ranSection);
}
