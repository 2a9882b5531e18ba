/**
 * Console bootstrap: sign-in, role detection, store/controller wiring,
 * tab navigation, and a full re-render on every store change.
 */

import { ApiClient, ApiError, detectRole } from "./api.js";
import { ConsoleController } from "./controller.js";
import type { ConsoleSession } from "./session.js";
import { ConsoleStore, ConsoleState, TabName } from "./state.js";
import { renderBoard } from "./views/board.js";
import { clear, h } from "./views/dom.js";
import { renderGraph } from "./views/graph.js";
import { renderQueue } from "./views/queue.js";
import { renderStats } from "./views/stats.js";

const SESSION_KEY = "ctimp-console-session";

const TABS: { name: TabName; label: string }[] = [
  { name: "board", label: "Triage board" },
  { name: "approvals", label: "Approvals" },
  { name: "assets", label: "Asset graph" },
  { name: "status", label: "Status" },
];

function loadSavedSession(): ConsoleSession | null {
  try {
    const raw = sessionStorage.getItem(SESSION_KEY);
    if (!raw) return null;
    return JSON.parse(raw) as ConsoleSession;
  } catch {
    return null;
  }
}

function renderLogin(root: HTMLElement, onSubmit: (input: {
  baseUrl: string;
  token: string;
  operator: string;
}) => void, errorMessage?: string): void {
  clear(root);
  const baseUrlInput = h("input", {
    class: "login-input",
    type: "text",
    placeholder: "API base URL (empty = this origin)",
    value: "",
  });
  const tokenInput = h("input", {
    class: "login-input",
    type: "password",
    placeholder: "bearer token",
  });
  const operatorInput = h("input", {
    class: "login-input",
    type: "text",
    placeholder: "your name (used for assignments)",
  });
  const form = h(
    "div",
    { class: "login-panel" },
    h("h1", { text: "ctimp console" }),
    errorMessage ? h("p", { class: "login-error", text: errorMessage }) : null,
    baseUrlInput,
    tokenInput,
    operatorInput,
    h("button", {
      class: "login-button",
      text: "Sign in",
      onClick: () =>
        onSubmit({
          baseUrl: baseUrlInput.value.trim().replace(/\/$/, ""),
          token: tokenInput.value.trim(),
          operator: operatorInput.value.trim() || "operator",
        }),
    }),
  );
  root.append(form);
}

function renderApp(
  root: HTMLElement,
  state: ConsoleState,
  controller: ConsoleController,
  onLogout: () => void,
): void {
  clear(root);
  const { session } = controller;

  const nav = h("nav", { class: "top-nav" });
  for (const tab of TABS) {
    nav.append(
      h("button", {
        class: "tab-button" + (state.ui.tab === tab.name ? " active" : ""),
        text: tab.label,
        dataset: { tab: tab.name },
        onClick: () => controller.store.dispatch({ type: "ui.tab", tab: tab.name }),
      }),
    );
  }
  nav.append(
    h("span", { class: `connection-dot connection-${state.connection}`, title: state.connection }),
    h("span", { class: "session-info", text: `${session.operator} (${session.role})` }),
    h("button", { class: "logout-button", text: "Sign out", onClick: onLogout }),
  );
  root.append(nav);

  if (state.lastError) {
    root.append(
      h(
        "div",
        { class: "error-banner" },
        h("span", { text: state.lastError }),
        h("button", {
          class: "dismiss",
          text: "dismiss",
          onClick: () => controller.store.dispatch({ type: "error", message: null }),
        }),
      ),
    );
  }

  const content = h("main", { class: "tab-content", dataset: { activeTab: state.ui.tab } });
  root.append(content);

  switch (state.ui.tab) {
    case "board":
      renderBoard(content, state, session, {
        moveAlert: (id, to) => void controller.moveAlert(id, to),
        assignAlert: (id, assignee) => void controller.assignAlert(id, assignee),
        clearCardError: (id) =>
          controller.store.dispatch({ type: "card.error.clear", alertId: id }),
      });
      break;
    case "approvals":
      renderQueue(content, state, session, {
        decide: (id, verdict) => void controller.decide(id, verdict),
        openAlert: (alertId) => {
          controller.store.dispatch({ type: "ui.highlightAlert", alertId });
          controller.store.dispatch({ type: "ui.tab", tab: "board" });
        },
      });
      break;
    case "assets":
      renderGraph(content, state, {
        selectNode: (nodeId) => controller.store.dispatch({ type: "ui.selectNode", nodeId }),
      });
      break;
    case "status":
      renderStats(content, state);
      break;
  }
}

async function startConsole(root: HTMLElement, session: ConsoleSession): Promise<void> {
  const api = new ApiClient(session);
  const store = new ConsoleStore();
  const controller = new ConsoleController(session, store, api);

  const logout = () => {
    sessionStorage.removeItem(SESSION_KEY);
    stream.stop();
    boot(root);
  };

  store.subscribe((state) => renderApp(root, state, controller, logout));
  const stream = controller.startStream();
  await controller.loadSnapshots();
}

export function boot(root: HTMLElement): void {
  const saved = loadSavedSession();
  if (saved) {
    void startConsole(root, saved);
    return;
  }
  const submit = async (input: { baseUrl: string; token: string; operator: string }) => {
    const probe = new ApiClient({ baseUrl: input.baseUrl, token: input.token });
    try {
      const role = await detectRole(probe);
      const session: ConsoleSession = { ...input, role };
      sessionStorage.setItem(SESSION_KEY, JSON.stringify(session));
      await startConsole(root, session);
    } catch (error) {
      const message =
        error instanceof ApiError && error.status === 401
          ? "token rejected — check it and try again"
          : `cannot reach the API: ${error instanceof Error ? error.message : String(error)}`;
      renderLogin(root, (again) => void submit(again), message);
    }
  };
  renderLogin(root, (input) => void submit(input));
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement) boot(rootElement);
