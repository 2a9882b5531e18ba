/** Minimal DOM builders: declarative element construction without a framework. */

export type Child = Node | string | null | undefined;

export interface Attrs {
  class?: string;
  text?: string;
  title?: string;
  href?: string;
  type?: string;
  value?: string;
  placeholder?: string;
  disabled?: boolean;
  open?: boolean;
  download?: string;
  dataset?: Record<string, string>;
  onClick?: (event: MouseEvent) => void;
}

export function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Attrs = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const element = document.createElement(tag);
  if (attrs.class) element.className = attrs.class;
  if (attrs.text !== undefined) element.textContent = attrs.text;
  if (attrs.title !== undefined) element.title = attrs.title;
  if (attrs.href !== undefined && element instanceof HTMLAnchorElement) {
    element.href = attrs.href;
  }
  if (attrs.download !== undefined && element instanceof HTMLAnchorElement) {
    element.download = attrs.download;
  }
  if (attrs.type !== undefined && element instanceof HTMLInputElement) {
    element.type = attrs.type;
  }
  if (attrs.value !== undefined && element instanceof HTMLInputElement) {
    element.value = attrs.value;
  }
  if (attrs.placeholder !== undefined && element instanceof HTMLInputElement) {
    element.placeholder = attrs.placeholder;
  }
  if (attrs.disabled !== undefined && "disabled" in element) {
    (element as HTMLButtonElement).disabled = attrs.disabled;
  }
  if (attrs.open !== undefined && element instanceof HTMLDetailsElement) {
    element.open = attrs.open;
  }
  if (attrs.dataset) {
    for (const [key, value] of Object.entries(attrs.dataset)) {
      element.dataset[key] = value;
    }
  }
  if (attrs.onClick) {
    element.addEventListener("click", attrs.onClick as EventListener);
  }
  for (const child of children) {
    if (child === null || child === undefined) continue;
    element.append(child);
  }
  return element;
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function svgEl(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: (Element | string)[]
): SVGElement {
  const element = document.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [key, value] of Object.entries(attrs)) {
    element.setAttribute(key, value);
  }
  for (const child of children) element.append(child);
  return element;
}

export function clear(element: Element): void {
  while (element.firstChild) element.removeChild(element.firstChild);
}

export function formatTimestamp(iso: string | null): string {
  if (!iso) return "—";
  return iso.replace("T", " ").replace(/\.\d+.*$/, "").replace(/\+00:00$/, "Z");
}
