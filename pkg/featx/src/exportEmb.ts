/** Re-export a slice of a word2vec-format multilingual subword embedding
 * into the embedding text format the language side loads. */
import * as fs from 'fs';
import * as path from 'path';

import { renderEmbeddings, EmbeddingRow } from './format';

const WORD_MARKER = '▁'; // sentencepiece word-start marker

export interface ExportOptions {
  sourcePath: string;
  allowlistPath: string;
  outPath: string;
  /** strip the leading sentencepiece marker from source pieces */
  stripMarker?: boolean;
}

export interface ExportSummary {
  requested: number;
  found: number;
  missing: string[];
  dim: number;
}

function readAllowlist(p: string): string[] {
  const out: string[] = [];
  const seen = new Set<string>();
  for (const raw of fs.readFileSync(p, 'utf-8').split('\n')) {
    const piece = raw.trim();
    if (!piece || piece.startsWith('#') || seen.has(piece)) {
      continue;
    }
    seen.add(piece);
    out.push(piece);
  }
  if (out.length === 0) {
    throw new Error(`${p}: allowlist is empty`);
  }
  return out;
}

export function exportEmbeddings(opts: ExportOptions): ExportSummary {
  const allow = readAllowlist(opts.allowlistPath);
  const want = new Set(allow);

  const lines = fs.readFileSync(opts.sourcePath, 'utf-8').split('\n');
  let header: string | undefined;
  const body: string[] = [];
  for (const raw of lines) {
    const line = raw.trim();
    if (!line || line.startsWith('#')) {
      continue;
    }
    if (header === undefined) {
      header = line;
    } else {
      body.push(line);
    }
  }
  if (header === undefined) {
    throw new Error(`${opts.sourcePath}: empty embedding source`);
  }
  const head = header.split(/\s+/);
  if (head.length !== 2) {
    throw new Error(`${opts.sourcePath}: malformed word2vec header ${JSON.stringify(header)}`);
  }
  const dim = Number(head[1]);
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`${opts.sourcePath}: bad dimension in header`);
  }

  const found = new Map<string, number[]>();
  for (const line of body) {
    const cols = line.split(/\s+/);
    let piece = cols[0];
    if (opts.stripMarker && piece.startsWith(WORD_MARKER)) {
      piece = piece.slice(WORD_MARKER.length);
    }
    if (!piece || !want.has(piece) || found.has(piece)) {
      continue; // keep the first occurrence when stripping causes collisions
    }
    if (cols.length !== dim + 1) {
      throw new Error(`${opts.sourcePath}: ${cols[0]} has ${cols.length - 1} values, expected ${dim}`);
    }
    found.set(piece, cols.slice(1).map(Number));
  }

  const rows: EmbeddingRow[] = [];
  const missing: string[] = [];
  for (const piece of allow) {
    const values = found.get(piece);
    if (values === undefined) {
      missing.push(piece);
    } else {
      rows.push({ piece, values });
    }
  }
  if (rows.length === 0) {
    throw new Error('no allowlisted piece exists in the source vocabulary');
  }
  for (const piece of missing) {
    console.warn(`warning: allowlisted piece ${JSON.stringify(piece)} not in source, omitted`);
  }

  fs.mkdirSync(path.dirname(path.resolve(opts.outPath)), { recursive: true });
  fs.writeFileSync(
    opts.outPath,
    renderEmbeddings(rows, dim, [
      `featx export source=${path.basename(opts.sourcePath)} pieces=${rows.length}/${allow.length}`,
    ]),
  );
  return { requested: allow.length, found: rows.length, missing, dim };
}
