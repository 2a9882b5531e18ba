/** Shared fixtures and an in-memory mock of the platform API. */

import type {
  AlertDoc,
  AlertStatus,
  AssetMapDoc,
  CommandDoc,
  FeedDoc,
  HealthDoc,
  RulesDoc,
} from "../src/types.js";

let serial = 0;

export function makeAlert(overrides: Partial<AlertDoc> = {}): AlertDoc {
  serial += 1;
  return {
    alert_id: `alert-${String(serial).padStart(4, "0")}`,
    raised_at: `2026-08-15T12:${String(serial % 60).padStart(2, "0")}:00+00:00`,
    rule_id: "ssh-bruteforce",
    level: 10,
    threat_type: "ssh-bruteforce",
    threat_group: "authentication",
    event: {
      received_at: "2026-08-15T12:00:00+00:00",
      source_host: "web1",
      program: "sshd",
      message: "Failed password for root from 203.0.113.9 port 40022 ssh2",
      decoder: "sshd",
      fields: { srcip: "203.0.113.9", user: "root" },
    },
    count: 1,
    status: "new",
    assignee: null,
    last_event_at: null,
    signature: ["ssh-bruteforce", [["key", "203.0.113.9"]]],
    ...overrides,
  };
}

export function makeCommand(overrides: Partial<CommandDoc> = {}): CommandDoc {
  serial += 1;
  return {
    command_id: `command-${String(serial).padStart(4, "0")}`,
    alert_id: "alert-0001",
    policy_id: "pol-ssh-block",
    rendered_cli: "iptables -I INPUT -s 203.0.113.9 -j DROP",
    target_node: "fw1",
    mode: "approve",
    state: "pending_approval",
    created_at: `2026-08-15T12:${String(serial % 60).padStart(2, "0")}:05+00:00`,
    decided_at: null,
    decided_by: null,
    executed_at: null,
    transcript: null,
    command_human: "Drop packets from the brute-forcing address at the edge firewalls",
    ...overrides,
  };
}

/** Mirror of the three-node lab map the backend ships as a fixture. */
export function fixtureMap(): AssetMapDoc {
  return {
    schema: "ctimp-assetmap/1",
    map_id: "fixture-lan",
    revision: 3,
    nodes: [
      {
        node_id: "db1",
        label: "Customer database",
        risk_level: "high",
        group: "core",
        function: "database",
        tags: ["pii"],
        addresses: ["10.0.0.12"],
        hostnames: ["db.internal.example"],
        services: [
          { name: "postgres", version: "15.3", ports: [5432] },
          { name: "openssh", version: "9.6", ports: [22] },
        ],
      },
      {
        node_id: "fw1",
        label: "Edge firewall",
        risk_level: "critical",
        group: "edge",
        function: "firewall",
        tags: ["gateway"],
        addresses: ["192.0.2.1", "10.0.0.1"],
      },
      {
        node_id: "web1",
        label: "Shop web server",
        risk_level: "medium",
        group: "dmz",
        function: "web",
        tags: ["internet-facing"],
        addresses: ["198.51.100.7"],
        hostnames: ["www.shop.example"],
        geolocation: { country_code: "PT", site_label: "lisbon-dc" },
        dependencies: [{ target: "db1", kind: "data" }],
        services: [
          { name: "nginx", version: "1.24", ports: [80, 443] },
          { name: "openssh", version: "8.9", ports: [22] },
        ],
      },
    ],
    edges: [
      { source: "fw1", target: "web1", relation: "link" },
      { source: "web1", target: "db1", relation: "depends_on" },
    ],
  };
}

export function fixtureRules(): RulesDoc {
  return {
    version: "v-abcdef123456",
    manifest: { "sigma-rule-1": "indicator--1111" },
    rules: [
      {
        rule_id: "ssh-bruteforce",
        origin: "native",
        level: 10,
        threat_type: "ssh-bruteforce",
        threat_group: "authentication",
      },
      {
        rule_id: "sigma-rule-1",
        origin: "sigma",
        level: 7,
        threat_type: "sigma:network_connection",
        threat_group: "cti-match",
      },
    ],
  };
}

export function fixtureFeeds(): FeedDoc[] {
  return [
    {
      source_id: "lab-bundle",
      location: "feeds/bundle.json",
      kind: "file",
      trust_tier: 4,
      poll_interval: 300,
      enabled: true,
      status: {
        last_sync: "2026-08-15T12:00:00+00:00",
        indicators: 5,
        added: 5,
        updated: 0,
        error: null,
      },
    },
  ];
}

export function fixtureHealth(alerts = 0): HealthDoc {
  return { status: "ok", rules_version: "v-abcdef123456", rules_loaded: 2, alerts };
}

const STATUS_RANK: Record<AlertStatus, number> = { new: 0, ongoing: 1, complete: 2 };

export interface MockServerOptions {
  alerts?: AlertDoc[];
  commands?: CommandDoc[];
  map?: AssetMapDoc;
  rules?: RulesDoc;
  feeds?: FeedDoc[];
  tokens?: Record<string, "admin" | "analyst">;
}

/**
 * In-memory stand-in for the platform API with the same semantics the real
 * service enforces: bearer roles, forward-only alert moves (409 otherwise),
 * verdicts only on pending commands, admin-only verdict/sync endpoints.
 */
export class MockServer {
  alerts = new Map<string, AlertDoc>();
  commands = new Map<string, CommandDoc>();
  map: AssetMapDoc;
  rules: RulesDoc;
  feeds: FeedDoc[];
  tokens: Record<string, "admin" | "analyst">;
  requests: { method: string; path: string; body: unknown }[] = [];

  constructor(options: MockServerOptions = {}) {
    for (const alert of options.alerts ?? []) this.alerts.set(alert.alert_id, alert);
    for (const command of options.commands ?? []) this.commands.set(command.command_id, command);
    this.map = options.map ?? fixtureMap();
    this.rules = options.rules ?? fixtureRules();
    this.feeds = options.feeds ?? fixtureFeeds();
    this.tokens = options.tokens ?? { "admin-token": "admin", "analyst-token": "analyst" };
  }

  readonly fetch: typeof fetch = async (input, init) => {
    const url = typeof input === "string" ? input : input instanceof URL ? input.href : input.url;
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.requests.push({ method, path, body });

    const json = (status: number, payload: unknown): Response =>
      new Response(JSON.stringify(payload), {
        status,
        headers: { "content-type": "application/json" },
      });
    const error = (status: number, code: string, message: string): Response =>
      json(status, { error: code, message });

    if (path === "/api/health" && method === "GET") {
      return json(200, fixtureHealth(this.alerts.size));
    }

    const headers = new Headers(init?.headers);
    const auth = headers.get("authorization") ?? "";
    const token = auth.toLowerCase().startsWith("bearer ") ? auth.slice(7).trim() : null;
    const role = token ? this.tokens[token] : undefined;
    if (!role) return error(401, "unauthorized", "unknown token");

    let match: RegExpMatchArray | null;

    if (path.startsWith("/api/alerts") && method === "GET") {
      return json(200, { alerts: [...this.alerts.values()] });
    }
    if ((match = path.match(/^\/api\/alerts\/([^/?]+)$/)) && method === "PATCH") {
      const alert = this.alerts.get(match[1]!);
      if (!alert) return error(404, "not_found", `no alert ${match[1]}`);
      const patch = body as { status?: AlertStatus; assignee?: string | null };
      let updated = { ...alert };
      if (patch.status !== undefined) {
        if (STATUS_RANK[patch.status] <= STATUS_RANK[alert.status]) {
          return error(
            409,
            "illegal_transition",
            `alert ${alert.alert_id}: cannot move ${alert.status} -> ${patch.status}`,
          );
        }
        updated = { ...updated, status: patch.status };
      }
      if ("assignee" in patch) updated = { ...updated, assignee: patch.assignee ?? null };
      this.alerts.set(updated.alert_id, updated);
      return json(200, updated);
    }

    if (path.startsWith("/api/commands") && method === "GET") {
      const stateFilter = new URL(url, "http://mock").searchParams.get("state");
      const commands = [...this.commands.values()].filter(
        (c) => !stateFilter || c.state === stateFilter,
      );
      return json(200, { commands });
    }
    if ((match = path.match(/^\/api\/commands\/([^/]+)\/verdict$/)) && method === "POST") {
      if (role !== "admin") return error(403, "forbidden", "admin role required");
      const command = this.commands.get(match[1]!);
      if (!command) return error(404, "not_found", `no command ${match[1]}`);
      if (command.state !== "pending_approval") {
        return error(
          409,
          "illegal_transition",
          `command ${command.command_id} is ${command.state}, not pending_approval`,
        );
      }
      const verdict = (body as { verdict: string }).verdict;
      const decided = {
        ...command,
        decided_at: "2026-08-15T12:30:00+00:00",
        decided_by: role,
      };
      const updated: CommandDoc =
        verdict === "approved"
          ? {
              ...decided,
              state: "executed",
              executed_at: "2026-08-15T12:30:01+00:00",
              transcript: "ok",
            }
          : { ...decided, state: "rejected_as_recommendation" };
      this.commands.set(updated.command_id, updated);
      return json(200, updated);
    }

    if (path === "/api/assetmap" && method === "GET") return json(200, this.map);
    if (path === "/api/rules" && method === "GET") return json(200, this.rules);
    if (path === "/api/feeds" && method === "GET") return json(200, { feeds: this.feeds });
    if ((match = path.match(/^\/api\/feeds\/([^/]+)\/sync$/)) && method === "POST") {
      if (role !== "admin") return error(403, "forbidden", "admin role required");
      if (!this.feeds.some((f) => f.source_id === match![1])) {
        return error(404, "not_found", `no feed ${match[1]}`);
      }
      return json(200, { feeds_fetched: 1 });
    }

    return error(404, "not_found", `no route ${method} ${path}`);
  };
}

/** Build a ReadableStream that emits the given chunks, then stays open. */
export function chunkStream(chunks: string[], keepOpen = false): ReadableStream<Uint8Array> {
  const encoder = new TextEncoder();
  return new ReadableStream<Uint8Array>({
    start(controller) {
      for (const chunk of chunks) controller.enqueue(encoder.encode(chunk));
      if (!keepOpen) controller.close();
    },
  });
}
