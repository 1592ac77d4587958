/** The frozen convolutional backbone: a small CNN whose final global average
 * pooling layer provides the per-image feature vector.
 *
 * Weights are synthesized from a seeded PRNG (make-backbone) and then never
 * change, so the artifact directory on disk fully determines extraction
 * output.  The directory holds standard tfjs layers-model artifacts
 * (model.json + weights.bin) plus meta.json with the preprocessing contract.
 */
import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';

import { mulberry32, uniformArray } from './prng';

export interface BackboneMeta {
  inputSize: number;
  dim: number;
  seed: number;
  mean: number[];
  std: number[];
}

const DEFAULT_MEAN = [0.485, 0.456, 0.406];
const DEFAULT_STD = [0.229, 0.224, 0.225];

export function buildBackbone(inputSize: number, dim: number, seed: number): tf.LayersModel {
  const model = tf.sequential({ name: 'featx_backbone' });
  model.add(
    tf.layers.conv2d({
      name: 'conv1',
      inputShape: [inputSize, inputSize, 3],
      filters: 16,
      kernelSize: 3,
      strides: 2,
      padding: 'same',
      activation: 'relu',
    }),
  );
  model.add(
    tf.layers.conv2d({
      name: 'conv2',
      filters: 32,
      kernelSize: 3,
      strides: 2,
      padding: 'same',
      activation: 'relu',
    }),
  );
  model.add(
    tf.layers.conv2d({
      name: 'conv3',
      filters: dim,
      kernelSize: 3,
      strides: 2,
      padding: 'same',
      activation: 'relu',
    }),
  );
  model.add(tf.layers.globalAveragePooling2d({ name: 'pool' }));

  const rand = mulberry32(seed);
  const weights = model.getWeights().map((w) => {
    const fanIn = w.shape.length === 4 ? w.shape[0]! * w.shape[1]! * w.shape[2]! : w.shape[0]!;
    const scale = 1 / Math.sqrt(fanIn);
    // biases get a small positive offset so relu units are active at init
    const values =
      w.shape.length === 1
        ? uniformArray(w.size, scale, rand).map((v) => Math.abs(v) + 0.05)
        : uniformArray(w.size, scale, rand);
    return tf.tensor(Float32Array.from(values), w.shape as number[]);
  });
  model.setWeights(weights);
  return model;
}

function joinWeightData(data: ArrayBuffer | ArrayBuffer[]): Buffer {
  if (Array.isArray(data)) {
    return Buffer.concat(data.map((b) => Buffer.from(b)));
  }
  return Buffer.from(data);
}

export async function saveBackbone(
  model: tf.LayersModel,
  dir: string,
  meta: BackboneMeta,
): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const json = {
        format: 'layers-model',
        generatedBy: 'featx',
        modelTopology: artifacts.modelTopology,
        weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
      };
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(json));
      fs.writeFileSync(
        path.join(dir, 'weights.bin'),
        joinWeightData(artifacts.weightData as ArrayBuffer | ArrayBuffer[]),
      );
      return {
        modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' as const },
      };
    }),
  );
  fs.writeFileSync(path.join(dir, 'meta.json'), JSON.stringify(meta, null, 2) + '\n');
}

export async function makeBackbone(
  dir: string,
  opts: { inputSize?: number; dim?: number; seed?: number } = {},
): Promise<BackboneMeta> {
  const meta: BackboneMeta = {
    inputSize: opts.inputSize ?? 32,
    dim: opts.dim ?? 64,
    seed: opts.seed ?? 7,
    mean: DEFAULT_MEAN,
    std: DEFAULT_STD,
  };
  const model = buildBackbone(meta.inputSize, meta.dim, meta.seed);
  await saveBackbone(model, dir, meta);
  model.dispose();
  return meta;
}

export async function loadBackbone(
  dir: string,
): Promise<{ model: tf.LayersModel; meta: BackboneMeta }> {
  const metaPath = path.join(dir, 'meta.json');
  if (!fs.existsSync(metaPath)) {
    throw new Error(`${dir}: not a featx backbone (missing meta.json)`);
  }
  const meta = JSON.parse(fs.readFileSync(metaPath, 'utf-8')) as BackboneMeta;
  const json = JSON.parse(fs.readFileSync(path.join(dir, 'model.json'), 'utf-8'));
  const weightData = fs.readFileSync(path.join(dir, 'weights.bin'));
  const model = await tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: json.modelTopology,
      weightSpecs: json.weightsManifest[0].weights,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength,
      ),
    }),
  );
  return { model, meta };
}
