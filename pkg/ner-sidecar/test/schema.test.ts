import { describe, expect, it } from 'vitest';

import { CorpusDoc, DialogueRecord, parseJsonl } from '../src/schema';

const GOOD = JSON.stringify({
  record_id: 'r1',
  turn_index: 0,
  history: [],
  query: 'who ?',
  gold_answer: 'nobody',
});

describe('parseJsonl', () => {
  it('parses records and skips blank lines', () => {
    const got = parseJsonl(`\n${GOOD}\n\n${GOOD}\n`, DialogueRecord, 'x.jsonl');
    expect(got).toHaveLength(2);
    expect(got[0].record_id).toBe('r1');
  });

  it('defaults rewrites to an empty object', () => {
    const [rec] = parseJsonl(GOOD, DialogueRecord, 'x.jsonl');
    expect(rec.rewrites).toEqual({});
  });

  it('keeps unknown keys', () => {
    const line = JSON.stringify({ doc_id: 'd', title: '', body: 'b', extra: 7 });
    const [doc] = parseJsonl(line, CorpusDoc, 'c.jsonl');
    expect((doc as Record<string, unknown>).extra).toBe(7);
  });

  it('reports the line number of malformed JSON', () => {
    expect(() => parseJsonl(`${GOOD}\n{oops`, DialogueRecord, 'x.jsonl')).toThrow(
      'x.jsonl:2: malformed JSON'
    );
  });

  it('reports the offending field on schema violations', () => {
    const bad = JSON.stringify({
      record_id: '',
      turn_index: 0,
      history: [],
      query: 'q',
      gold_answer: '',
    });
    expect(() => parseJsonl(bad, DialogueRecord, 'x.jsonl')).toThrow(
      /x\.jsonl:1: record_id/
    );
  });

  it('rejects history turns with empty strings', () => {
    const bad = JSON.stringify({
      record_id: 'r1',
      turn_index: 1,
      history: [{ q: 'fine', a: '' }],
      query: 'q',
      gold_answer: 'a',
    });
    expect(() => parseJsonl(bad, DialogueRecord, 'x.jsonl')).toThrow(
      /x\.jsonl:1: history\.0\.a/
    );
  });
});
