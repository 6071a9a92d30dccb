/** Slot-based phrase composition over the service's correction grammar. */

import type { Grammar, GrammarTemplate } from "./types";

const SLOT_RE = /\{(\w+)\}/g;

export function slotNames(template: GrammarTemplate): string[] {
  return [...template.pattern.matchAll(SLOT_RE)].map((m) => m[1]);
}

/**
 * Fill a template's slots. Returns null while any slot is unselected (the
 * submit button stays disabled); throws on a selection outside the catalog.
 */
export function composePhrase(
  template: GrammarTemplate,
  selections: Record<string, string>,
): string | null {
  for (const name of slotNames(template)) {
    const value = selections[name];
    if (value === undefined || value === "") return null;
    const options = template.slots[name] ?? [];
    if (!options.includes(value)) {
      throw new Error(`'${value}' is not a valid ${name} option`);
    }
  }
  return template.pattern.replace(SLOT_RE, (_, name) => selections[name]);
}

/** Every phrase the template can produce (cartesian product of its slots). */
export function enumerateTemplate(template: GrammarTemplate): string[] {
  const names = slotNames(template);
  let phrases = [template.pattern];
  for (const name of names) {
    const next: string[] = [];
    for (const phrase of phrases) {
      for (const option of template.slots[name]) {
        next.push(phrase.replace(`{${name}}`, option));
      }
    }
    phrases = next;
  }
  return phrases;
}

export function enumerateGrammar(grammar: Grammar): string[] {
  return grammar.templates.flatMap(enumerateTemplate);
}

/** Validate free text against the terminal vocabulary; returns the words
 * the grammar does not know, for an explicit rejection message. */
export function unknownWords(grammar: Grammar, text: string): string[] {
  const known = new Set(grammar.terminals);
  return text
    .toLowerCase()
    .split(/\s+/)
    .filter((w) => w.length > 0 && !known.has(w));
}

export function isComposable(grammar: Grammar, phrase: string): boolean {
  return enumerateGrammar(grammar).includes(phrase);
}
