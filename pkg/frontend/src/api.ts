/** Typed client for the platform's JSON API. */

import type { ConsoleSession, Role } from "./session.js";
import type {
  AlertDoc,
  AlertStatus,
  ApiErrorDoc,
  AssetMapDoc,
  CommandDoc,
  FeedDoc,
  HealthDoc,
  RulesDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface AlertPatch {
  status?: AlertStatus;
  assignee?: string | null;
}

export class ApiClient {
  constructor(
    private readonly session: Pick<ConsoleSession, "baseUrl" | "token">,
    // Wrapped so the global fetch is always invoked bare (never with a
    // foreign `this`, which browsers reject). Public: the event stream must
    // ride the same transport this client was built with.
    readonly fetchImpl: typeof fetch = (input, init) => globalThis.fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {
      authorization: `Bearer ${this.session.token}`,
    };
    if (body !== undefined) headers["content-type"] = "application/json";
    const response = await this.fetchImpl(this.session.baseUrl + path, {
      method,
      headers,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const text = await response.text();
    let parsed: unknown = null;
    if (text) {
      try {
        parsed = JSON.parse(text);
      } catch {
        parsed = null;
      }
    }
    if (!response.ok) {
      const detail = (parsed ?? {}) as Partial<ApiErrorDoc>;
      throw new ApiError(
        response.status,
        detail.error ?? "http_error",
        detail.message ?? `request failed with status ${response.status}`,
      );
    }
    return parsed as T;
  }

  health(): Promise<HealthDoc> {
    return this.request("GET", "/api/health");
  }

  async listAlerts(status?: AlertStatus): Promise<AlertDoc[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    const body = await this.request<{ alerts: AlertDoc[] }>("GET", `/api/alerts${query}`);
    return body.alerts;
  }

  patchAlert(alertId: string, patch: AlertPatch): Promise<AlertDoc> {
    return this.request("PATCH", `/api/alerts/${encodeURIComponent(alertId)}`, patch);
  }

  async listCommands(state?: string): Promise<CommandDoc[]> {
    const query = state ? `?state=${encodeURIComponent(state)}` : "";
    const body = await this.request<{ commands: CommandDoc[] }>("GET", `/api/commands${query}`);
    return body.commands;
  }

  verdict(commandId: string, verdict: "approved" | "rejected"): Promise<CommandDoc> {
    return this.request("POST", `/api/commands/${encodeURIComponent(commandId)}/verdict`, {
      verdict,
    });
  }

  assetMap(): Promise<AssetMapDoc> {
    return this.request("GET", "/api/assetmap");
  }

  rules(): Promise<RulesDoc> {
    return this.request("GET", "/api/rules");
  }

  async feeds(): Promise<FeedDoc[]> {
    const body = await this.request<{ feeds: FeedDoc[] }>("GET", "/api/feeds");
    return body.feeds;
  }

  syncFeed(sourceId: string): Promise<unknown> {
    return this.request("POST", `/api/feeds/${encodeURIComponent(sourceId)}/sync`);
  }

  streamUrl(): string {
    return this.session.baseUrl + "/api/stream";
  }

  streamHeaders(): Record<string, string> {
    return { authorization: `Bearer ${this.session.token}` };
  }
}

/**
 * Learn the token's role without a side effect: an admin-only endpoint with a
 * deliberately nonexistent id returns 404 for admins (the role check passed)
 * and 403 for analysts. 401 means the token itself is bad.
 */
export async function detectRole(api: ApiClient): Promise<Role> {
  try {
    await api.syncFeed("__role-probe__");
  } catch (error) {
    if (error instanceof ApiError) {
      if (error.status === 404) return "admin";
      if (error.status === 403) return "analyst";
      throw error;
    }
    throw error;
  }
  throw new ApiError(500, "role_probe", "role probe unexpectedly succeeded");
}
