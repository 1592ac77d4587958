/** Text formatting shared by the two emitted file formats.  Values are
 * printed like C's %.9g (9 significant digits, trailing zeros trimmed) so
 * the files are byte-stable and survive the consumer's round trip. */

export function g9(x: number): string {
  if (!Number.isFinite(x)) {
    throw new Error(`non-finite value ${x}`);
  }
  if (x === 0) {
    return Object.is(x, -0) ? '-0' : '0';
  }
  let s = x.toPrecision(9);
  let exp = '';
  const e = s.indexOf('e');
  if (e >= 0) {
    exp = 'e' + s.slice(e + 1);
    s = s.slice(0, e);
  }
  if (s.includes('.')) {
    s = s.replace(/0+$/, '').replace(/\.$/, '');
  }
  return s + exp;
}

export interface FeatureRow {
  id: string;
  values: Float32Array | number[];
}

/** Render a GFEAT1 file: provenance comments, header, one line per image in
 * the given order. */
export function renderGfeat(rows: FeatureRow[], dim: number, comments: string[]): string {
  const lines: string[] = [];
  for (const c of comments) {
    lines.push(`# ${c}`);
  }
  lines.push(`GFEAT1 ${rows.length} ${dim}`);
  for (const row of rows) {
    if (row.values.length !== dim) {
      throw new Error(`${row.id}: emitted ${row.values.length} values, declared ${dim}`);
    }
    const vals = Array.from(row.values, g9);
    lines.push(`${row.id} ${vals.join(' ')}`);
  }
  return lines.join('\n') + '\n';
}

export interface EmbeddingRow {
  piece: string;
  values: number[];
}

export function renderEmbeddings(rows: EmbeddingRow[], dim: number, comments: string[]): string {
  const lines: string[] = [];
  for (const c of comments) {
    lines.push(`# ${c}`);
  }
  lines.push(`${rows.length} ${dim}`);
  for (const row of rows) {
    if (/\s/.test(row.piece)) {
      throw new Error(`piece ${JSON.stringify(row.piece)} contains whitespace`);
    }
    if (row.values.length !== dim) {
      throw new Error(`${row.piece}: ${row.values.length} values, expected ${dim}`);
    }
    lines.push(`${row.piece} ${row.values.map(g9).join(' ')}`);
  }
  return lines.join('\n') + '\n';
}
