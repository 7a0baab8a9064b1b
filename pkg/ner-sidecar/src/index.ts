export { Entity, extractEntities, normalizeSpan, MODEL_NAME, MODEL_VERSION } from './extract';
export { SidecarJob, annotate, exportEntities, parseFields } from './export';
export {
  AnnotationLine,
  CorpusDoc,
  DialogueRecord,
  FIELDS,
  Field,
  HeaderLine,
  parseJsonl,
} from './schema';
