/**
 * Asset graph: deterministic clustered layout rendered as SVG. Nodes are
 * colored by risk level and gathered inside dashed hulls per group; the
 * inspector shows everything the map says about a selected node. The
 * rendered graph exports client-side as a PNG.
 */

import { ConsoleState } from "../state.js";
import type { AssetEdgeDoc, AssetMapDoc, AssetNodeDoc, RiskLevel } from "../types.js";
import { clear, h, svgEl } from "./dom.js";

export const RISK_COLORS: Record<RiskLevel, string> = {
  low: "#3fb950",
  medium: "#d29922",
  high: "#f0883e",
  critical: "#f85149",
};

export const NODE_RADIUS = 16;
const UNGROUPED = "(ungrouped)";

export interface PositionedNode {
  node: AssetNodeDoc;
  x: number;
  y: number;
}

export interface PositionedEdge {
  edge: AssetEdgeDoc;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface GroupHull {
  name: string;
  cx: number;
  cy: number;
  r: number;
  members: string[];
}

export interface GraphLayout {
  width: number;
  height: number;
  nodes: PositionedNode[];
  edges: PositionedEdge[];
  groups: GroupHull[];
}

/**
 * Pure, deterministic layout: groups sit on a ring around the canvas center,
 * members sit on a small ring around their group's center. Same map in,
 * same coordinates out.
 */
export function layoutAssetGraph(map: AssetMapDoc, width = 960, height = 640): GraphLayout {
  const groupNames = new Map<string, AssetNodeDoc[]>();
  const sortedNodes = [...map.nodes].sort((a, b) => a.node_id.localeCompare(b.node_id));
  for (const node of sortedNodes) {
    const name = node.group ?? UNGROUPED;
    const members = groupNames.get(name);
    if (members) members.push(node);
    else groupNames.set(name, [node]);
  }
  const names = [...groupNames.keys()].sort((a, b) => a.localeCompare(b));

  const cx = width / 2;
  const cy = height / 2;
  const positioned = new Map<string, PositionedNode>();
  const groups: GroupHull[] = [];

  const memberRing = (count: number): number =>
    count <= 1 ? 0 : Math.max(44, (count * 64) / (2 * Math.PI));
  const maxHull = Math.max(...names.map((n) => memberRing(groupNames.get(n)!.length))) +
    NODE_RADIUS + 22;
  const outerRing =
    names.length <= 1 ? 0 : Math.max(maxHull + 30, Math.min(width, height) / 2 - maxHull - 24);

  names.forEach((name, groupIndex) => {
    const members = groupNames.get(name)!;
    const angle = (2 * Math.PI * groupIndex) / names.length - Math.PI / 2;
    const gx = cx + outerRing * Math.cos(angle);
    const gy = cy + outerRing * Math.sin(angle);
    const ring = memberRing(members.length);
    members.forEach((node, memberIndex) => {
      const theta = (2 * Math.PI * memberIndex) / members.length - Math.PI / 2;
      positioned.set(node.node_id, {
        node,
        x: gx + ring * Math.cos(theta),
        y: gy + ring * Math.sin(theta),
      });
    });
    groups.push({
      name,
      cx: gx,
      cy: gy,
      r: ring + NODE_RADIUS + 22,
      members: members.map((m) => m.node_id),
    });
  });

  const edges: PositionedEdge[] = [];
  for (const edge of map.edges) {
    const source = positioned.get(edge.source);
    const target = positioned.get(edge.target);
    if (!source || !target) continue;
    edges.push({ edge, x1: source.x, y1: source.y, x2: target.x, y2: target.y });
  }

  return {
    width,
    height,
    nodes: sortedNodes.map((n) => positioned.get(n.node_id)!),
    edges,
    groups,
  };
}

export function buildGraphSvg(
  layout: GraphLayout,
  selected: string | null,
  onSelect: (nodeId: string) => void,
): SVGElement {
  const svg = svgEl("svg", {
    class: "asset-graph-svg",
    viewBox: `0 0 ${layout.width} ${layout.height}`,
    width: String(layout.width),
    height: String(layout.height),
    xmlns: "http://www.w3.org/2000/svg",
  });
  svg.append(
    svgEl("rect", {
      x: "0",
      y: "0",
      width: String(layout.width),
      height: String(layout.height),
      fill: "#0d1117",
    }),
  );

  for (const hull of layout.groups) {
    svg.append(
      svgEl("circle", {
        class: "group-hull",
        cx: String(hull.cx),
        cy: String(hull.cy),
        r: String(hull.r),
        fill: "none",
        stroke: "#30363d",
        "stroke-dasharray": "6 4",
        "data-group": hull.name,
      }),
      svgEl(
        "text",
        {
          class: "group-label",
          x: String(hull.cx),
          y: String(hull.cy - hull.r - 8),
          fill: "#8b949e",
          "text-anchor": "middle",
          "font-size": "13",
        },
        hull.name,
      ),
    );
  }

  for (const { edge, x1, y1, x2, y2 } of layout.edges) {
    svg.append(
      svgEl("line", {
        class: `graph-edge relation-${edge.relation}`,
        x1: String(x1),
        y1: String(y1),
        x2: String(x2),
        y2: String(y2),
        stroke: edge.relation === "depends_on" ? "#8957e5" : "#58a6ff",
        "stroke-width": "2",
        ...(edge.relation === "depends_on" ? { "stroke-dasharray": "5 4" } : {}),
        "data-source": edge.source,
        "data-target": edge.target,
      }),
    );
  }

  for (const { node, x, y } of layout.nodes) {
    const circle = svgEl("circle", {
      class: "graph-node" + (selected === node.node_id ? " selected" : ""),
      cx: String(x),
      cy: String(y),
      r: String(NODE_RADIUS),
      fill: RISK_COLORS[node.risk_level],
      stroke: selected === node.node_id ? "#f0f6fc" : "#010409",
      "stroke-width": selected === node.node_id ? "3" : "1.5",
      "data-node-id": node.node_id,
      "data-risk": node.risk_level,
    });
    circle.addEventListener("click", () => onSelect(node.node_id));
    svg.append(
      circle,
      svgEl(
        "text",
        {
          class: "node-label",
          x: String(x),
          y: String(y + NODE_RADIUS + 14),
          fill: "#c9d1d9",
          "text-anchor": "middle",
          "font-size": "12",
          "data-label-for": node.node_id,
        },
        node.label,
      ),
    );
    if (node.tags && node.tags.length > 0) {
      svg.append(
        svgEl(
          "text",
          {
            class: "node-tags",
            x: String(x),
            y: String(y + NODE_RADIUS + 28),
            fill: "#8b949e",
            "text-anchor": "middle",
            "font-size": "10",
          },
          node.tags.join(" · "),
        ),
      );
    }
  }
  return svg;
}

export function renderInspector(node: AssetNodeDoc): HTMLElement {
  const panel = h(
    "aside",
    { class: "node-inspector", dataset: { nodeId: node.node_id } },
    h("h3", { text: node.label }),
    h("p", { class: "inspector-id", text: node.node_id }),
    h("p", { class: "inspector-risk" },
      "risk: ",
      h("span", { class: `risk-badge risk-${node.risk_level}`, text: node.risk_level }),
    ),
  );
  if (node.group) panel.append(h("p", { class: "inspector-group", text: `group: ${node.group}` }));
  if (node.function) {
    panel.append(h("p", { class: "inspector-function", text: `function: ${node.function}` }));
  }
  if (node.tags && node.tags.length > 0) {
    const tags = h("div", { class: "inspector-tags" });
    for (const tag of node.tags) tags.append(h("span", { class: "tag-chip", text: tag }));
    panel.append(tags);
  }
  if (node.addresses && node.addresses.length > 0) {
    panel.append(
      h("p", { class: "inspector-addresses", text: `addresses: ${node.addresses.join(", ")}` }),
    );
  }
  if (node.hostnames && node.hostnames.length > 0) {
    panel.append(
      h("p", { class: "inspector-hostnames", text: `hostnames: ${node.hostnames.join(", ")}` }),
    );
  }
  if (node.services && node.services.length > 0) {
    const list = h("ul", { class: "inspector-services" });
    for (const service of node.services) {
      const ports = service.ports && service.ports.length > 0
        ? ` :${service.ports.join(",")}`
        : "";
      const version = service.version ? ` ${service.version}` : "";
      list.append(h("li", { text: `${service.name}${version}${ports}` }));
    }
    panel.append(h("h4", { text: "services" }), list);
  }
  if (node.dependencies && node.dependencies.length > 0) {
    const list = h("ul", { class: "inspector-dependencies" });
    for (const dep of node.dependencies) {
      list.append(h("li", { text: `${dep.target} (${dep.kind})` }));
    }
    panel.append(h("h4", { text: "dependencies" }), list);
  }
  if (node.geolocation && (node.geolocation.country_code || node.geolocation.site_label)) {
    const geo = [node.geolocation.site_label, node.geolocation.country_code]
      .filter((part): part is string => !!part)
      .join(", ");
    panel.append(h("p", { class: "inspector-geo", text: `location: ${geo}` }));
  }
  return panel;
}

export type Rasterize = (svgMarkup: string, width: number, height: number) => Promise<string>;

/** Draw the serialized SVG onto a canvas and return a PNG data URL. */
const rasterizeWithCanvas: Rasterize = (svgMarkup, width, height) =>
  new Promise((resolve, reject) => {
    const image = new Image();
    image.onload = () => {
      const canvas = document.createElement("canvas");
      canvas.width = width;
      canvas.height = height;
      const ctx = canvas.getContext("2d");
      if (!ctx) {
        reject(new Error("canvas 2d context unavailable"));
        return;
      }
      ctx.drawImage(image, 0, 0, width, height);
      resolve(canvas.toDataURL("image/png"));
    };
    image.onerror = () => reject(new Error("could not rasterize graph"));
    image.src = `data:image/svg+xml;charset=utf-8,${encodeURIComponent(svgMarkup)}`;
  });

export interface ExportDeps {
  rasterize?: Rasterize;
  triggerDownload?: (dataUrl: string, filename: string) => void;
}

function defaultTriggerDownload(dataUrl: string, filename: string): void {
  const anchor = h("a", { href: dataUrl, download: filename });
  document.body.append(anchor);
  anchor.click();
  anchor.remove();
}

/** Serialize the live SVG, rasterize it, and hand the PNG to the browser. */
export async function exportPng(
  svg: SVGElement,
  filename: string,
  deps: ExportDeps = {},
): Promise<string> {
  const rasterize = deps.rasterize ?? rasterizeWithCanvas;
  const triggerDownload = deps.triggerDownload ?? defaultTriggerDownload;
  const markup = new XMLSerializer().serializeToString(svg);
  const width = Number(svg.getAttribute("width") ?? "960");
  const height = Number(svg.getAttribute("height") ?? "640");
  const dataUrl = await rasterize(markup, width, height);
  triggerDownload(dataUrl, filename.endsWith(".png") ? filename : `${filename}.png`);
  return dataUrl;
}

export interface GraphHandlers {
  selectNode: (nodeId: string | null) => void;
  exportDeps?: ExportDeps;
}

export function renderGraph(
  root: HTMLElement,
  state: ConsoleState,
  handlers: GraphHandlers,
): void {
  clear(root);
  const map = state.assetMap;
  if (!map || map.nodes.length === 0) {
    root.append(
      h("p", {
        class: "graph-empty",
        text: "no asset map loaded — nothing to draw yet",
      }),
    );
    return;
  }

  const layout = layoutAssetGraph(map);
  const svg = buildGraphSvg(layout, state.ui.selectedNode, handlers.selectNode);

  const toolbar = h(
    "div",
    { class: "graph-toolbar" },
    h("span", {
      class: "map-meta",
      text: `${map.map_id} · revision ${map.revision} · ${map.nodes.length} nodes / ${map.edges.length} edges`,
    }),
    h("button", {
      class: "export-button",
      text: "Export PNG",
      onClick: () => {
        void exportPng(svg, `${map.map_id}-r${map.revision}`, handlers.exportDeps ?? {});
      },
    }),
  );

  const stage = h("div", { class: "graph-stage" });
  stage.append(svg);

  const selectedNode = map.nodes.find((n) => n.node_id === state.ui.selectedNode);
  if (selectedNode) stage.append(renderInspector(selectedNode));

  root.append(toolbar, stage);
}
