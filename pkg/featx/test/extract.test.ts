import { execFileSync, spawnSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { PNG } from 'pngjs';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { makeBackbone } from '../src/backbone';
import { extractFeatures } from '../src/extract';
import { g9 } from '../src/format';

let tmp: string;

beforeAll(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'featx-'));
});

afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

function writePng(filePath: string, width: number, height: number, seed: number) {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 4;
      png.data[i] = (x * 7 + seed * 13) % 256;
      png.data[i + 1] = (y * 11 + seed * 29) % 256;
      png.data[i + 2] = (x * y + seed) % 256;
      png.data[i + 3] = 255;
    }
  }
  fs.writeFileSync(filePath, PNG.sync.write(png));
}

function primaryValidate(args: string[]) {
  return spawnSync('python3', ['-m', 'mmlstm.cli', 'validate', ...args], {
    encoding: 'utf-8',
    cwd: path.join(__dirname, '..', '..'),
  });
}

describe('g9 formatting', () => {
  it('renders 9 significant digits without trailing zeros', () => {
    expect(g9(0.5)).toBe('0.5');
    expect(g9(1)).toBe('1');
    expect(g9(-0.123456789123)).toBe('-0.123456789');
    expect(g9(1e-12)).toBe('1e-12');
    expect(g9(123456789012)).toBe('1.23456789e+11');
    expect(Number(g9(0.1))).toBeCloseTo(0.1, 12);
  });
});

describe('make-backbone', () => {
  it('is byte-deterministic for a fixed seed', async () => {
    const a = path.join(tmp, 'bb-a');
    const b = path.join(tmp, 'bb-b');
    await makeBackbone(a, { inputSize: 16, dim: 8, seed: 5 });
    await makeBackbone(b, { inputSize: 16, dim: 8, seed: 5 });
    for (const name of ['model.json', 'weights.bin', 'meta.json']) {
      expect(fs.readFileSync(path.join(a, name))).toEqual(fs.readFileSync(path.join(b, name)));
    }
    const c = path.join(tmp, 'bb-c');
    await makeBackbone(c, { inputSize: 16, dim: 8, seed: 6 });
    expect(fs.readFileSync(path.join(c, 'weights.bin'))).not.toEqual(
      fs.readFileSync(path.join(a, 'weights.bin')),
    );
  });
});

describe('extract', () => {
  it('emits a valid, deterministic GFEAT1 file and skips unreadable images', async () => {
    const backbone = path.join(tmp, 'backbone');
    await makeBackbone(backbone, { inputSize: 16, dim: 8, seed: 7 });

    const images = path.join(tmp, 'images');
    fs.mkdirSync(images);
    writePng(path.join(images, 'cat.png'), 24, 20, 1);
    writePng(path.join(images, 'dog.png'), 20, 28, 2);
    writePng(path.join(images, 'boat.png'), 16, 16, 3);
    fs.writeFileSync(path.join(images, 'broken.png'), 'not a png at all');

    const out1 = path.join(tmp, 'feats-1.gfeat');
    const summary = await extractFeatures({ imageDir: images, backboneDir: backbone, outPath: out1 });
    expect(summary.count).toBe(3);
    expect(summary.dim).toBe(8);
    expect(summary.skipped).toEqual(['broken']);

    const text = fs.readFileSync(out1, 'utf-8');
    const header = text.split('\n').find((l) => l.startsWith('GFEAT1'));
    expect(header).toBe('GFEAT1 3 8'); // declared count/dim match emitted
    const ids = text
      .split('\n')
      .filter((l) => l && !l.startsWith('#') && !l.startsWith('GFEAT1'))
      .map((l) => l.split(' ')[0]);
    expect(ids).toEqual(['boat', 'cat', 'dog']); // sorted image-id order

    // re-running extraction yields identical bytes
    const out2 = path.join(tmp, 'feats-2.gfeat');
    await extractFeatures({ imageDir: images, backboneDir: backbone, outPath: out2 });
    expect(fs.readFileSync(out2)).toEqual(fs.readFileSync(out1));

    // the primary component's validator accepts the file as-is
    const res = primaryValidate(['--features', out1]);
    expect(res.status, res.stderr).toBe(0);
    expect(res.stdout).toContain('3 feature vectors of dim 8');
  }, 30000);

  it('rejects duplicate image ids before writing anything', async () => {
    const backbone = path.join(tmp, 'backbone-dup');
    await makeBackbone(backbone, { inputSize: 16, dim: 4, seed: 1 });
    const images = path.join(tmp, 'images-dup');
    fs.mkdirSync(images);
    writePng(path.join(images, 'same.png'), 16, 16, 1);
    writePng(path.join(images, 'same.PNG'), 16, 16, 2);
    const out = path.join(tmp, 'dup.gfeat');
    await expect(
      extractFeatures({ imageDir: images, backboneDir: backbone, outPath: out }),
    ).rejects.toThrow(/duplicate image id/);
    expect(fs.existsSync(out)).toBe(false);
  }, 30000);
});
