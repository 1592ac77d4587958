/** PNG decoding and the resize / center-crop / normalize preprocessing in
 * front of the backbone. */
import * as fs from 'fs';
import * as tf from '@tensorflow/tfjs';
import { PNG } from 'pngjs';

export function decodePng(filePath: string): tf.Tensor3D {
  const png = PNG.sync.read(fs.readFileSync(filePath));
  const { width, height, data } = png;
  const rgb = new Float32Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    rgb[i * 3] = data[i * 4] / 255;
    rgb[i * 3 + 1] = data[i * 4 + 1] / 255;
    rgb[i * 3 + 2] = data[i * 4 + 2] / 255;
  }
  return tf.tensor3d(rgb, [height, width, 3]);
}

/** Resize the shorter side to `size`, center-crop to size x size, then
 * normalize each channel with the given constants. */
export function preprocess(
  image: tf.Tensor3D,
  size: number,
  mean: number[],
  std: number[],
): tf.Tensor3D {
  return tf.tidy(() => {
    const [h, w] = image.shape;
    const scale = size / Math.min(h, w);
    const nh = Math.max(size, Math.round(h * scale));
    const nw = Math.max(size, Math.round(w * scale));
    const resized = tf.image.resizeBilinear(image, [nh, nw]);
    const top = Math.floor((nh - size) / 2);
    const left = Math.floor((nw - size) / 2);
    const cropped = tf.slice(resized, [top, left, 0], [size, size, 3]);
    return cropped.sub(tf.tensor1d(mean)).div(tf.tensor1d(std));
  });
}
