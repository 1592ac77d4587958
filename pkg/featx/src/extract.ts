/** Directory of images -> GFEAT1 feature file via the frozen backbone. */
import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';

import { loadBackbone } from './backbone';
import { renderGfeat, FeatureRow } from './format';
import { decodePng, preprocess } from './image';

export interface ExtractionManifest {
  imageDir: string;
  outPath: string;
  backboneDir: string;
  /** preprocessing overrides; defaults come from the backbone's meta.json */
  mean?: number[];
  std?: number[];
}

export interface ExtractionSummary {
  count: number;
  dim: number;
  skipped: string[];
}

export async function extractFeatures(manifest: ExtractionManifest): Promise<ExtractionSummary> {
  const files = fs
    .readdirSync(manifest.imageDir)
    .filter((f) => /\.png$/i.test(f))
    .sort();
  if (files.length === 0) {
    throw new Error(`${manifest.imageDir}: no .png images found`);
  }
  const stems = new Map<string, string>();
  for (const f of files) {
    const stem = f.replace(/\.png$/i, '');
    const prev = stems.get(stem);
    if (prev !== undefined) {
      throw new Error(`duplicate image id ${JSON.stringify(stem)} (${prev} and ${f})`);
    }
    stems.set(stem, f);
  }

  const { model, meta } = await loadBackbone(manifest.backboneDir);
  const mean = manifest.mean ?? meta.mean;
  const std = manifest.std ?? meta.std;

  const rows: FeatureRow[] = [];
  const skipped: string[] = [];
  for (const [stem, file] of [...stems.entries()].sort(([a], [b]) => (a < b ? -1 : 1))) {
    const filePath = path.join(manifest.imageDir, file);
    let image: tf.Tensor3D;
    try {
      image = decodePng(filePath);
    } catch (err) {
      console.warn(`warning: skipping unreadable image ${file}: ${(err as Error).message}`);
      skipped.push(stem);
      continue;
    }
    const vector = tf.tidy(() => {
      const input = preprocess(image, meta.inputSize, mean, std).expandDims(0);
      return (model.predict(input) as tf.Tensor).squeeze();
    });
    image.dispose();
    const values = (await vector.data()) as Float32Array;
    vector.dispose();
    if (values.length !== meta.dim) {
      throw new Error(`${stem}: backbone emitted ${values.length} values, expected ${meta.dim}`);
    }
    rows.push({ id: stem, values });
  }
  model.dispose();

  const comments = [
    `featx backbone=${path.basename(manifest.backboneDir)} seed=${meta.seed}`,
    `preprocess resize-shorter=${meta.inputSize} center-crop=${meta.inputSize}` +
      ` mean=${mean.join(',')} std=${std.join(',')}`,
  ];
  fs.mkdirSync(path.dirname(path.resolve(manifest.outPath)), { recursive: true });
  fs.writeFileSync(manifest.outPath, renderGfeat(rows, meta.dim, comments));
  return { count: rows.length, dim: meta.dim, skipped };
}
