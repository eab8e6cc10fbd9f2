// PNG loading and the resize step that makes both sides patch multiples.

import * as fs from 'fs';
import { PNG } from 'pngjs';

/** Channel-first float image, values normalized later by the caller. */
export interface FloatImage {
  height: number;
  width: number;
  /** [3 * height * width], plane order r, g, b, each row-major in [0, 1] */
  data: Float32Array;
}

export function readPng(file: string): FloatImage {
  const png = PNG.sync.read(fs.readFileSync(file)); // any color type -> RGBA8
  const { height, width } = png;
  const plane = height * width;
  const data = new Float32Array(3 * plane);
  for (let i = 0; i < plane; i++) {
    data[i] = png.data[4 * i] / 255;
    data[plane + i] = png.data[4 * i + 1] / 255;
    data[2 * plane + i] = png.data[4 * i + 2] / 255;
  }
  return { height, width, data };
}

/**
 * Sides after resizing: scale the long side towards `target` (when given),
 * then snap each side to the nearest positive multiple of `patch`.
 * 1024 with target 1022 and patch 14 gives 1022; 518 stays 518.
 */
export function patchAlignedSize(
  height: number, width: number, patch: number, target?: number,
): { height: number; width: number } {
  const scale = target ? target / Math.max(height, width) : 1;
  const snap = (side: number) => Math.max(patch, Math.round((side * scale) / patch) * patch);
  return { height: snap(height), width: snap(width) };
}

/** Bilinear resample with half-pixel-aligned sample centers, edges clamped. */
export function resizeBilinear(img: FloatImage, outH: number, outW: number): FloatImage {
  if (outH === img.height && outW === img.width) return img;
  const out = new Float32Array(3 * outH * outW);
  const srcPlane = img.height * img.width;
  const dstPlane = outH * outW;
  for (let y = 0; y < outH; y++) {
    let sy = ((y + 0.5) * img.height) / outH - 0.5;
    sy = Math.min(Math.max(sy, 0), img.height - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, img.height - 1);
    const fy = sy - y0;
    for (let x = 0; x < outW; x++) {
      let sx = ((x + 0.5) * img.width) / outW - 0.5;
      sx = Math.min(Math.max(sx, 0), img.width - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, img.width - 1);
      const fx = sx - x0;
      for (let c = 0; c < 3; c++) {
        const p = img.data;
        const base = c * srcPlane;
        const top = p[base + y0 * img.width + x0] * (1 - fx) + p[base + y0 * img.width + x1] * fx;
        const bot = p[base + y1 * img.width + x0] * (1 - fx) + p[base + y1 * img.width + x1] * fx;
        out[c * dstPlane + y * outW + x] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return { height: outH, width: outW, data: out };
}

// standard ImageNet statistics, same convention the backbone was trained with
const MEAN = [0.485, 0.456, 0.406];
const STD = [0.229, 0.224, 0.225];

export function normalize(img: FloatImage): FloatImage {
  const plane = img.height * img.width;
  const data = new Float32Array(img.data.length);
  for (let c = 0; c < 3; c++) {
    for (let i = 0; i < plane; i++) {
      data[c * plane + i] = (img.data[c * plane + i] - MEAN[c]) / STD[c];
    }
  }
  return { height: img.height, width: img.width, data };
}
