import { z } from 'zod';

export const FIELDS = ['query_rewrite', 'history', 'doc_and_answer'] as const;
export type Field = (typeof FIELDS)[number];

const Turn = z.object({ q: z.string().min(1), a: z.string().min(1) });

export const DialogueRecord = z
  .object({
    record_id: z.string().min(1),
    turn_index: z.number().int().min(0),
    history: z.array(Turn),
    query: z.string().min(1),
    gold_answer: z.string(),
    pos_doc_id: z.string().nullable().optional(),
    manual_rewrite: z.string().nullable().optional(),
    rewrites: z.record(z.string()).default({}),
  })
  .passthrough();
export type DialogueRecord = z.infer<typeof DialogueRecord>;

export const CorpusDoc = z
  .object({
    doc_id: z.string().min(1),
    title: z.string(),
    body: z.string(),
  })
  .passthrough();
export type CorpusDoc = z.infer<typeof CorpusDoc>;

export interface AnnotationLine {
  record_id: string;
  field: Field;
  entities: string[];
  labels: string[];
}

export interface HeaderLine {
  header: {
    tool: string;
    model: string;
    version: string;
    variant: string;
    fields: Field[];
  };
}

export function parseJsonl<S extends z.ZodTypeAny>(
  text: string,
  schema: S,
  where: string
): z.output<S>[] {
  const records: z.output<S>[] = [];
  const lines = text.split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let obj: unknown;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${where}:${i + 1}: malformed JSON`);
    }
    const result = schema.safeParse(obj);
    if (!result.success) {
      const issue = result.error.issues[0];
      const path = issue.path.join('.') || '(root)';
      throw new Error(`${where}:${i + 1}: ${path}: ${issue.message}`);
    }
    records.push(result.data);
  }
  return records;
}
