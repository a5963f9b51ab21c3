/**
 * Client-side copy of the rendering-mode math.
 *
 * The panel applies scores to the live page instead of swapping in the
 * service's serialized HTML, so propagation, the hue mapping, opacity,
 * and filter retention are re-computed here over the stamped elements.
 */

export type Mode = "gradient" | "opacity" | "filter";

export interface ScoreEntry {
  score: number;
  channel: string;
}

/** Wire form of the score map: element id (as string) -> entry. */
export type ScoreWire = Record<string, ScoreEntry>;

export interface RenderSettings {
  mode: Mode;
  threshold: number;
  opacityFloor: number;
  gradientSaturation: number;
  gradientLightness: number;
}

export const DEFAULT_SETTINGS: RenderSettings = {
  mode: "filter",
  threshold: 70,
  opacityFloor: 0.1,
  gradientSaturation: 85,
  gradientLightness: 75,
};

export const CONTAINER_TAGS = new Set([
  "div", "body", "section", "header", "footer", "nav", "main", "aside",
  "ul", "ol", "table",
]);

/** Minimal tree view over the stamped elements. */
export interface TreeNode {
  id: number;
  parent: number | null;
  children: number[];
}

export function scoreOf(scores: ScoreWire, id: number): number {
  const entry = scores[String(id)];
  return entry ? entry.score : 0;
}

/** Bottom-up single pass: every node takes the max of its subtree. */
export function propagateMax(nodes: TreeNode[], scores: ScoreWire): Map<number, number> {
  const byId = new Map(nodes.map((n) => [n.id, n]));
  const effective = new Map<number, number>();
  const order = [...nodes].sort((a, b) => a.id - b.id);
  for (let i = order.length - 1; i >= 0; i--) {
    const node = order[i];
    let best = scoreOf(scores, node.id);
    for (const child of node.children) {
      const lifted = effective.get(child) ?? 0;
      if (lifted > best) best = lifted;
    }
    effective.set(node.id, best);
    if (node.parent !== null && !byId.has(node.parent)) {
      throw new Error(`node ${node.id} has unknown parent ${node.parent}`);
    }
  }
  return effective;
}

export function gradientHue(score: number): number {
  return 120 - 1.2 * score;
}

export function hslColor(score: number, settings: RenderSettings): string {
  const hue = gradientHue(score);
  const rounded = Number.isInteger(hue) ? String(hue) : String(Number(hue.toFixed(1)));
  return `hsl(${rounded}, ${settings.gradientSaturation}%, ${settings.gradientLightness}%)`;
}

export function opacityValue(effectiveScore: number, settings: RenderSettings): number {
  return Math.max(settings.opacityFloor, effectiveScore / 100);
}

/**
 * Ancestor closure of the above-threshold set; the root always stays so
 * the page itself is never hidden.
 */
export function retainedSet(nodes: TreeNode[], scores: ScoreWire, threshold: number): Set<number> {
  const byId = new Map(nodes.map((n) => [n.id, n]));
  const root = nodes.find((n) => n.parent === null);
  const keep = new Set<number>();
  if (root) keep.add(root.id);
  for (const node of nodes) {
    if (scoreOf(scores, node.id) >= threshold) {
      let current: TreeNode | undefined = node;
      while (current && !keep.has(current.id)) {
        keep.add(current.id);
        current = current.parent === null ? undefined : byId.get(current.parent);
      }
    }
  }
  return keep;
}

/** Build TreeNodes from stamped live elements (ids must be assigned). */
export function treeFromElements(elements: Element[]): TreeNode[] {
  const idOfEl = (el: Element): number => Number(el.getAttribute("data-tm-id"));
  const stamped = new Set(elements);
  return elements.map((el) => {
    let parentEl = el.parentElement;
    while (parentEl && !stamped.has(parentEl)) parentEl = parentEl.parentElement;
    return {
      id: idOfEl(el),
      parent: parentEl ? idOfEl(parentEl) : null,
      children: Array.from(el.children)
        .filter((c) => stamped.has(c))
        .map(idOfEl),
    };
  });
}
