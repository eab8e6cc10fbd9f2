// Walks an image folder, runs the frozen backbone, writes one .vtok per
// image, verifying each by immediate re-read. Failures are per-file: one bad
// image never aborts the batch.

import * as fs from 'fs';
import * as path from 'path';

import { Backbone, loadBackbone } from './backbone.js';
import { normalize, patchAlignedSize, readPng, resizeBilinear } from './image.js';
import { encodeTokenFile, TokenGrid } from './tokenfile.js';

export interface ExportJob {
  modelId: string;
  /** 1-based backbone layer indices, coarse-to-fine order preserved in the file */
  layers: number[];
  inDir: string;
  outDir: string;
  /** optional target for the long side before snapping to patch multiples */
  size?: number;
}

export interface ExportResult {
  written: string[];
  failed: { file: string; error: string }[];
}

export function listImages(dir: string): string[] {
  const entries = fs.readdirSync(dir, { recursive: true, encoding: 'utf8' });
  return entries
    .filter((e) => e.toLowerCase().endsWith('.png'))
    .sort()
    .map((e) => path.join(dir, e));
}

/** Token-major backbone output minus the class token, as a channel-major grid. */
export function toGrid(tokens: Float32Array, gridH: number, gridW: number, channels: number): TokenGrid {
  const cells = gridH * gridW;
  const data = new Float32Array(channels * cells);
  for (let i = 0; i < cells; i++) {
    const src = (1 + i) * channels; // skip the class token at index 0
    for (let c = 0; c < channels; c++) {
      data[c * cells + i] = tokens[src + c];
    }
  }
  return { channels, height: gridH, width: gridW, data };
}

export function exportImage(backbone: Backbone, job: ExportJob, file: string): string {
  const png = readPng(file);
  const target = patchAlignedSize(png.height, png.width, backbone.patchSize, job.size);
  const resized = resizeBilinear(png, target.height, target.width);
  const outputs = backbone.forward(normalize(resized), job.layers);
  const grids = outputs.map((o) => toGrid(o.tokens, o.gridH, o.gridW, o.channels));

  const rel = path.relative(job.inDir, file);
  const outFile = path.join(job.outDir, rel.replace(/\.png$/i, '.vtok'));
  fs.mkdirSync(path.dirname(outFile), { recursive: true });
  // the header records the true source size; grids carry their own shapes
  const buf = encodeTokenFile(grids, png.height, png.width);
  fs.writeFileSync(outFile, buf);
  if (!fs.readFileSync(outFile).equals(buf)) {
    throw new Error(`verification re-read of ${outFile} does not match what was written`);
  }
  return outFile;
}

export function exportDataset(job: ExportJob): ExportResult {
  const backbone = loadBackbone(job.modelId);
  const images = listImages(job.inDir);
  if (images.length === 0) {
    throw new Error(`no .png images under ${job.inDir}`);
  }
  const result: ExportResult = { written: [], failed: [] };
  for (const file of images) {
    try {
      result.written.push(exportImage(backbone, job, file));
    } catch (e) {
      result.failed.push({ file, error: e instanceof Error ? e.message : String(e) });
    }
  }
  return result;
}
