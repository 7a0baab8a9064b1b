import nlp from 'compromise';

export interface Entity {
  text: string;
  label: string;
}

// Match categories in precedence order; a span tagged both ways keeps the
// first label it matched.
const CATEGORIES: Array<[string, (doc: any) => any]> = [
  ['person', (doc) => doc.people()],
  ['place', (doc) => doc.places()],
  ['organization', (doc) => doc.organizations()],
  ['date', (doc) => doc.match('#Date+')],
  ['value', (doc) => doc.match('#Value+')],
];

// compromise keeps trailing punctuation attached to spans ("Jonas Novak .")
const EDGE_PUNCT = /^[^\p{L}\p{N}]+|[^\p{L}\p{N}]+$/gu;

export function normalizeSpan(span: string): string {
  return span.replace(EDGE_PUNCT, '').replace(/\s+/g, ' ').trim().toLowerCase();
}

/** All named entities in the text, lowercased, deduplicated, sorted. */
export function extractEntities(text: string): Entity[] {
  const seen = new Map<string, string>();
  if (text.trim()) {
    const doc = nlp(text);
    for (const [label, select] of CATEGORIES) {
      for (const span of select(doc).out('array') as string[]) {
        const cleaned = normalizeSpan(span);
        if (cleaned && !seen.has(cleaned)) {
          seen.set(cleaned, label);
        }
      }
    }
  }
  return [...seen.entries()]
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([text, label]) => ({ text, label }));
}

export const MODEL_NAME = 'compromise';
export const MODEL_VERSION: string = (nlp as any).version ?? 'unknown';
