// Frozen feature backbones. The real deployment target is a pretrained
// patch-14 vision transformer; this module defines the interface plus a
// self-contained deterministic stand-in with the same token geometry, so the
// export pipeline and its consumers can run where model weights are not
// reachable. Layer indices are 1-based block outputs (hidden state after
// block k), and every layer emits a leading class token that the exporter
// strips before writing.

import { FloatImage } from './image.js';

export interface LayerTokens {
  gridH: number;
  gridW: number;
  channels: number;
  /** token-major [(1 + gridH*gridW) * channels]; token 0 is the class token */
  tokens: Float32Array;
}

export interface Backbone {
  readonly id: string;
  readonly patchSize: number;
  readonly channels: number;
  readonly layerCount: number;
  forward(image: FloatImage, layers: number[]): LayerTokens[];
}

export function loadBackbone(id: string): Backbone {
  if (id === 'stub' || id.startsWith('stub:')) {
    const seed = id === 'stub' ? 0 : Number(id.slice('stub:'.length));
    if (!Number.isInteger(seed) || seed < 0) {
      throw new Error(`bad stub seed in model id '${id}'`);
    }
    return new StubBackbone(seed);
  }
  throw new Error(
    `model '${id}' is not available: pretrained weights are not bundled, ` +
    `use 'stub:<seed>' for the deterministic stand-in`);
}

function splitmix32(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s + 0x9e3779b9) >>> 0;
    let t = s ^ (s >>> 16);
    t = Math.imul(t, 0x21f0aaad);
    t ^= t >>> 15;
    t = Math.imul(t, 0x735a2d97);
    return ((t ^ (t >>> 15)) >>> 0) / 4294967296;
  };
}

const DESC = 16; // per-patch descriptor length fed through the layer maps

/**
 * Deterministic ViT-shaped feature extractor. Each patch is summarized by
 * local statistics (means, contrast, gradients, position) and pushed through
 * a per-layer random linear map with a tanh squash; the class token gets the
 * whole-image statistics. Same input, same id: bit-identical output.
 */
export class StubBackbone implements Backbone {
  readonly patchSize = 14;
  readonly channels = 384;
  readonly layerCount = 12;
  readonly id: string;
  private readonly seed: number;
  private readonly weights = new Map<number, Float64Array>();

  constructor(seed: number) {
    this.seed = seed;
    this.id = `stub:${seed}`;
  }

  private layerWeights(layer: number): Float64Array {
    let w = this.weights.get(layer);
    if (!w) {
      // golden-ratio mix keeps per-layer streams disjoint for any seed
      const rand = splitmix32((this.seed * 0x9e3779b9 + layer * 0x85ebca6b) >>> 0);
      w = new Float64Array(this.channels * DESC);
      const scale = 1 / Math.sqrt(DESC);
      for (let i = 0; i < w.length; i++) w[i] = (rand() * 2 - 1) * scale;
      this.weights.set(layer, w);
    }
    return w;
  }

  forward(image: FloatImage, layers: number[]): LayerTokens[] {
    const p = this.patchSize;
    if (image.height % p || image.width % p) {
      throw new Error(`image ${image.height}x${image.width} is not a multiple of patch ${p}`);
    }
    for (const l of layers) {
      if (!Number.isInteger(l) || l < 1 || l > this.layerCount) {
        throw new Error(`layer ${l} out of range 1..${this.layerCount}`);
      }
    }
    const gridH = image.height / p;
    const gridW = image.width / p;
    const descs = new Float64Array((1 + gridH * gridW) * DESC);
    this.describe(image, 0, 0, image.width, image.height, 0.5, 0.5, descs, 0); // class token
    for (let gy = 0; gy < gridH; gy++) {
      for (let gx = 0; gx < gridW; gx++) {
        const cx = (gx + 0.5) / gridW;
        const cy = (gy + 0.5) / gridH;
        this.describe(image, gx * p, gy * p, p, p, cx, cy, descs, (1 + gy * gridW + gx) * DESC);
      }
    }
    return layers.map((layer) => {
      const w = this.layerWeights(layer);
      const nTokens = 1 + gridH * gridW;
      const tokens = new Float32Array(nTokens * this.channels);
      for (let t = 0; t < nTokens; t++) {
        for (let c = 0; c < this.channels; c++) {
          let acc = 0;
          for (let d = 0; d < DESC; d++) acc += w[c * DESC + d] * descs[t * DESC + d];
          tokens[t * this.channels + c] = Math.fround(Math.tanh(acc));
        }
      }
      return { gridH, gridW, channels: this.channels, tokens };
    });
  }

  private describe(
    img: FloatImage, x0: number, y0: number, w: number, h: number,
    cx: number, cy: number, out: Float64Array, at: number,
  ): void {
    const plane = img.height * img.width;
    const mean = [0, 0, 0];
    let sum = 0, sumSq = 0, min = Infinity, max = -Infinity, dx = 0, dy = 0;
    const n = w * h;
    for (let c = 0; c < 3; c++) {
      const base = c * plane;
      for (let y = y0; y < y0 + h; y++) {
        for (let x = x0; x < x0 + w; x++) {
          const v = img.data[base + y * img.width + x];
          mean[c] += v;
          sum += v;
          sumSq += v * v;
          if (v < min) min = v;
          if (v > max) max = v;
          if (x + 1 < x0 + w) dx += Math.abs(img.data[base + y * img.width + x + 1] - v);
          if (y + 1 < y0 + h) dy += Math.abs(img.data[base + (y + 1) * img.width + x] - v);
        }
      }
      mean[c] /= n;
    }
    const total = 3 * n;
    const variance = Math.max(sumSq / total - (sum / total) ** 2, 0);
    out[at] = mean[0];
    out[at + 1] = mean[1];
    out[at + 2] = mean[2];
    out[at + 3] = Math.sqrt(variance);
    out[at + 4] = dx / Math.max(3 * (w - 1) * h, 1);
    out[at + 5] = dy / Math.max(3 * w * (h - 1), 1);
    out[at + 6] = min;
    out[at + 7] = max;
    out[at + 8] = cx;
    out[at + 9] = cy;
    out[at + 10] = Math.sin(2 * Math.PI * cx);
    out[at + 11] = Math.cos(2 * Math.PI * cy);
    out[at + 12] = mean[0] - mean[1];
    out[at + 13] = mean[1] - mean[2];
    out[at + 14] = cx * cy;
    out[at + 15] = 1;
  }
}
