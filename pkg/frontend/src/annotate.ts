/**
 * Applies score-driven annotations to the live page and removes them
 * exactly.
 *
 * Every attribute mutation records the attribute's prior value first, so
 * removal restores the DOM attribute-for-attribute (including dropping
 * the stamped ids). A swap is "remove everything, then apply" so a mode
 * change never leaves residue from the previous mode.
 */

import { assignIds } from "./ids.js";
import {
  CONTAINER_TAGS, RenderSettings, ScoreWire, hslColor, opacityValue,
  propagateMax, retainedSet, scoreOf, treeFromElements,
} from "./scoremath.js";

interface AttrRestore {
  el: Element;
  attr: string;
  previous: string | null;
}

export class Annotator {
  private restoreLog: AttrRestore[] = [];
  private applied = false;

  get isApplied(): boolean {
    return this.applied;
  }

  private setAttr(el: Element, attr: string, value: string): void {
    this.restoreLog.push({ el, attr, previous: el.getAttribute(attr) });
    el.setAttribute(attr, value);
  }

  private appendStyle(el: Element, fragment: string): void {
    const previous = el.getAttribute("style");
    this.restoreLog.push({ el, attr: "style", previous });
    const base = previous ? previous.replace(/;\s*$/, "") + "; " : "";
    el.setAttribute("style", base + fragment);
  }

  /** Annotate the page rooted at root according to mode settings. */
  apply(root: Element, scores: ScoreWire, settings: RenderSettings): void {
    if (this.applied) this.remove();
    const stampLog: AttrRestore[] = [];
    for (const el of assignIds(root)) {
      // assignIds stamped data-tm-id without logging; log for removal.
      stampLog.push({ el, attr: "data-tm-id", previous: null });
    }
    this.restoreLog.push(...stampLog);
    const elements = stampLog.map((entry) => entry.el);
    const nodes = treeFromElements(elements);

    if (settings.mode === "gradient") {
      for (const el of elements) {
        const tag = el.tagName.toLowerCase();
        if (CONTAINER_TAGS.has(tag)) {
          this.appendStyle(el, "border-color: transparent");
        } else {
          const id = Number(el.getAttribute("data-tm-id"));
          this.appendStyle(el, `outline: 2px solid ${hslColor(scoreOf(scores, id), settings)}`);
        }
      }
    } else if (settings.mode === "opacity") {
      const effective = propagateMax(nodes, scores);
      for (const el of elements) {
        const id = Number(el.getAttribute("data-tm-id"));
        const value = opacityValue(effective.get(id) ?? 0, settings);
        this.appendStyle(el, `opacity: ${value}`);
      }
    } else {
      const keep = retainedSet(nodes, scores, settings.threshold);
      const kept = (el: Element): boolean =>
        keep.has(Number(el.getAttribute("data-tm-id")));
      for (const el of elements) {
        if (kept(el)) continue;
        this.setAttr(el, "aria-hidden", "true");
        this.setAttr(el, "tabindex", "-1");
        this.appendStyle(el, "display: none");
        const parent = el.parentElement;
        if (!parent || kept(parent)) this.setAttr(el, "inert", "");
      }
    }
    this.applied = true;
  }

  /** Restore every touched attribute to its pre-application value. */
  remove(): void {
    for (let i = this.restoreLog.length - 1; i >= 0; i--) {
      const { el, attr, previous } = this.restoreLog[i];
      if (previous === null) el.removeAttribute(attr);
      else el.setAttribute(attr, previous);
    }
    this.restoreLog = [];
    this.applied = false;
  }
}

/** Attribute snapshot of a subtree, for equality assertions. */
export function snapshotAttributes(root: Element): string {
  const lines: string[] = [];
  const visit = (el: Element, depth: number): void => {
    const attrs = Array.from(el.attributes)
      .map((a) => `${a.name}=${a.value}`)
      .sort()
      .join(" ");
    lines.push(`${depth}:${el.tagName.toLowerCase()} ${attrs}`);
    for (const child of Array.from(el.children)) visit(child, depth + 1);
  };
  visit(root, 0);
  return lines.join("\n");
}
