#!/usr/bin/env node
import { parseArgs } from 'node:util';

import { exportEntities, parseFields } from './export';

const USAGE = `usage: ner-sidecar export-entities --dialogues F --out F
                           [--corpus F] [--fields a,b] [--variant v]

Annotates each dialogue record with named-entity sets per field
(query_rewrite, history, doc_and_answer) and writes entity JSONL with a
provenance header line.`;

export function main(argv: string[]): number {
  if (argv[0] !== 'export-entities') {
    console.error(USAGE);
    return argv[0] === '--help' ? 0 : 2;
  }
  let parsed;
  try {
    parsed = parseArgs({
      args: argv.slice(1),
      options: {
        dialogues: { type: 'string' },
        corpus: { type: 'string' },
        out: { type: 'string' },
        fields: { type: 'string' },
        variant: { type: 'string', default: 'manual' },
        help: { type: 'boolean' },
      },
    });
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(USAGE);
    return 2;
  }
  if (parsed.values.help) {
    console.log(USAGE);
    return 0;
  }
  const { dialogues, corpus, out, fields, variant } = parsed.values;
  if (!dialogues || !out) {
    console.error('error: --dialogues and --out are required');
    console.error(USAGE);
    return 2;
  }
  try {
    const n = exportEntities({
      dialoguesPath: dialogues,
      corpusPath: corpus,
      outPath: out,
      fields: parseFields(fields),
      variant: variant as string,
    });
    console.log(`wrote ${n} annotations to ${out}`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
