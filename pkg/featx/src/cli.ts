#!/usr/bin/env node
/** featx CLI: make-backbone | extract | export-emb.
 *
 *   featx make-backbone --out DIR [--size 32] [--dim 64] [--seed 7]
 *   featx extract --images DIR --backbone DIR --out FILE
 *                 [--mean r,g,b] [--std r,g,b]
 *   featx export-emb --source FILE --allow FILE --out FILE [--strip-marker]
 */
import { makeBackbone } from './backbone';
import { extractFeatures } from './extract';
import { exportEmbeddings } from './exportEmb';

interface Flags {
  [key: string]: string | boolean;
}

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith('--')) {
      throw new Error(`unexpected argument ${JSON.stringify(arg)}`);
    }
    const name = arg.slice(2);
    const next = argv[i + 1];
    if (next === undefined || next.startsWith('--')) {
      flags[name] = true;
    } else {
      flags[name] = next;
      i++;
    }
  }
  return flags;
}

function need(flags: Flags, name: string): string {
  const v = flags[name];
  if (typeof v !== 'string') {
    throw new Error(`missing required flag --${name}`);
  }
  return v;
}

function floats(v: string): number[] {
  return v.split(',').map(Number);
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === 'make-backbone') {
      const flags = parseFlags(rest);
      const dir = need(flags, 'out');
      const meta = await makeBackbone(dir, {
        inputSize: flags.size ? Number(flags.size) : undefined,
        dim: flags.dim ? Number(flags.dim) : undefined,
        seed: flags.seed ? Number(flags.seed) : undefined,
      });
      console.log(
        `wrote backbone to ${dir} (input ${meta.inputSize}x${meta.inputSize}, ` +
          `dim ${meta.dim}, seed ${meta.seed})`,
      );
      return 0;
    }
    if (command === 'extract') {
      const flags = parseFlags(rest);
      const summary = await extractFeatures({
        imageDir: need(flags, 'images'),
        backboneDir: need(flags, 'backbone'),
        outPath: need(flags, 'out'),
        mean: typeof flags.mean === 'string' ? floats(flags.mean) : undefined,
        std: typeof flags.std === 'string' ? floats(flags.std) : undefined,
      });
      console.log(
        `wrote ${flags.out}: ${summary.count} vectors of dim ${summary.dim}` +
          (summary.skipped.length ? `, skipped ${summary.skipped.length} unreadable` : ''),
      );
      return 0;
    }
    if (command === 'export-emb') {
      const flags = parseFlags(rest);
      const summary = exportEmbeddings({
        sourcePath: need(flags, 'source'),
        allowlistPath: need(flags, 'allow'),
        outPath: need(flags, 'out'),
        stripMarker: flags['strip-marker'] === true,
      });
      console.log(
        `wrote ${flags.out}: ${summary.found}/${summary.requested} pieces, dim ${summary.dim}`,
      );
      return 0;
    }
    console.error('usage: featx <make-backbone|extract|export-emb> [flags]');
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
