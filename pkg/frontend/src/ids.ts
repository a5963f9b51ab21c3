/**
 * Element id assignment mirroring the engine's parse order.
 *
 * The engine numbers elements in pre-order, skipping script/style/noscript
 * subtrees entirely. Walking the live DOM with the same rules yields the
 * same ids the engine assigns to the page snapshot, so scores map back to
 * live elements through the data-tm-id attribute.
 */

export const EXCLUDED_TAGS = new Set(["script", "style", "noscript"]);

export const ID_ATTR = "data-tm-id";

/** Pre-order elements under (and including) root, exclusions applied. */
export function collectElements(root: Element): Element[] {
  const out: Element[] = [];
  const visit = (el: Element): void => {
    if (EXCLUDED_TAGS.has(el.tagName.toLowerCase())) return;
    out.push(el);
    for (const child of Array.from(el.children)) visit(child);
  };
  visit(root);
  return out;
}

/**
 * Stamp engine-compatible ids onto the live elements. Returns the stamped
 * elements in id order; element i carries data-tm-id="i".
 */
export function assignIds(root: Element): Element[] {
  const elements = collectElements(root);
  elements.forEach((el, index) => el.setAttribute(ID_ATTR, String(index)));
  return elements;
}

export function idOf(el: Element): number | null {
  const raw = el.getAttribute(ID_ATTR);
  return raw === null ? null : Number(raw);
}
