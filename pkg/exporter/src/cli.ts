#!/usr/bin/env node
// usage: vtok-export export --model stub:0 --layers 4,8,12 --in <dir> --out <dir> [--size 1022]

import { parseArgs } from 'node:util';

import { exportDataset, ExportJob } from './export.js';

export function parseCli(argv: string[]): ExportJob {
  const args = argv[0] === 'export' ? argv.slice(1) : argv;
  const { values } = parseArgs({
    args,
    options: {
      model: { type: 'string' },
      layers: { type: 'string', default: '4,8,12' },
      in: { type: 'string' },
      out: { type: 'string' },
      size: { type: 'string' },
    },
  });
  if (!values.model || !values.in || !values.out) {
    throw new Error('required: --model <id> --in <dir> --out <dir>');
  }
  const layers = values.layers!.split(',').map((s) => Number(s.trim()));
  if (layers.length === 0 || layers.some((l) => !Number.isInteger(l) || l < 1)) {
    throw new Error(`--layers must be comma-separated positive integers, got '${values.layers}'`);
  }
  const job: ExportJob = {
    modelId: values.model,
    layers,
    inDir: values.in,
    outDir: values.out,
  };
  if (values.size !== undefined) {
    const size = Number(values.size);
    if (!Number.isInteger(size) || size < 1) {
      throw new Error(`--size must be a positive integer, got '${values.size}'`);
    }
    job.size = size;
  }
  return job;
}

export function main(argv: string[]): number {
  let job: ExportJob;
  try {
    job = parseCli(argv);
  } catch (e) {
    console.error(`usage error: ${e instanceof Error ? e.message : e}`);
    return 1;
  }
  try {
    const result = exportDataset(job);
    for (const f of result.failed) {
      console.error(`error: ${f.file}: ${f.error}`);
    }
    console.log(`exported ${result.written.length} of ${result.written.length + result.failed.length} images to ${job.outDir}`);
    return result.written.length === 0 ? 2 : 0;
  } catch (e) {
    console.error(`error: ${e instanceof Error ? e.message : e}`);
    return 2;
  }
}

const entry = process.argv[1] ?? '';
if (entry.endsWith('cli.js') || entry.endsWith('cli.ts')) {
  process.exit(main(process.argv.slice(2)));
}
