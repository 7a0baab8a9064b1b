import * as fs from 'node:fs';

import { MODEL_NAME, MODEL_VERSION, extractEntities } from './extract';
import {
  AnnotationLine,
  CorpusDoc,
  DialogueRecord,
  FIELDS,
  Field,
  HeaderLine,
  parseJsonl,
} from './schema';

export interface SidecarJob {
  dialoguesPath: string;
  corpusPath?: string;
  outPath: string;
  fields: Field[];
  variant: string;
}

function fieldText(
  record: DialogueRecord,
  field: Field,
  variant: string,
  corpus: Map<string, CorpusDoc>
): string {
  if (field === 'query_rewrite') {
    const rewrite = record.rewrites[variant];
    if (rewrite === undefined) {
      throw new Error(
        `record ${record.record_id} has no rewrite variant '${variant}'`
      );
    }
    return rewrite;
  }
  if (field === 'history') {
    return record.history.map((t) => `${t.q} . ${t.a}`).join(' . ');
  }
  const parts: string[] = [];
  if (record.pos_doc_id) {
    const doc = corpus.get(record.pos_doc_id);
    if (!doc) {
      throw new Error(
        `record ${record.record_id} points at unknown document '${record.pos_doc_id}'`
      );
    }
    if (doc.title) parts.push(doc.title);
    if (doc.body) parts.push(doc.body);
  }
  if (record.gold_answer) parts.push(record.gold_answer);
  return parts.join(' . ');
}

export function annotate(
  records: DialogueRecord[],
  corpus: Map<string, CorpusDoc>,
  fields: Field[],
  variant: string
): AnnotationLine[] {
  const lines: AnnotationLine[] = [];
  for (const record of records) {
    for (const field of fields) {
      const entities = extractEntities(fieldText(record, field, variant, corpus));
      lines.push({
        record_id: record.record_id,
        field,
        entities: entities.map((e) => e.text),
        labels: entities.map((e) => e.label),
      });
    }
  }
  return lines;
}

export function exportEntities(job: SidecarJob): number {
  const records = parseJsonl(
    fs.readFileSync(job.dialoguesPath, 'utf-8'),
    DialogueRecord,
    job.dialoguesPath
  );
  const corpus = new Map<string, CorpusDoc>();
  if (job.corpusPath) {
    for (const doc of parseJsonl(
      fs.readFileSync(job.corpusPath, 'utf-8'),
      CorpusDoc,
      job.corpusPath
    )) {
      corpus.set(doc.doc_id, doc);
    }
  }

  const header: HeaderLine = {
    header: {
      tool: 'ner-sidecar',
      model: MODEL_NAME,
      version: MODEL_VERSION,
      variant: job.variant,
      fields: job.fields,
    },
  };
  const lines = annotate(records, corpus, job.fields, job.variant);
  const out =
    [header, ...lines].map((line) => JSON.stringify(line)).join('\n') + '\n';
  fs.writeFileSync(job.outPath, out, 'utf-8');
  return lines.length;
}

export function parseFields(raw: string | undefined): Field[] {
  if (!raw) return [...FIELDS];
  const fields: Field[] = [];
  for (const part of raw.split(',')) {
    const name = part.trim();
    if (!name) continue;
    if (!(FIELDS as readonly string[]).includes(name)) {
      throw new Error(`unknown field '${name}', expected one of ${FIELDS.join(', ')}`);
    }
    fields.push(name as Field);
  }
  if (!fields.length) throw new Error('no fields selected');
  return fields;
}
