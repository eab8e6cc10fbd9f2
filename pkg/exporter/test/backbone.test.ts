import { describe, expect, it } from 'vitest';

import { loadBackbone } from '../src/backbone.js';
import { FloatImage, normalize } from '../src/image.js';

function syntheticImage(height: number, width: number, seed: number): FloatImage {
  const data = new Float32Array(3 * height * width);
  let s = seed >>> 0;
  for (let i = 0; i < data.length; i++) {
    s = (Math.imul(s, 1664525) + 1013904223) >>> 0;
    data[i] = s / 2 ** 32;
  }
  return { height, width, data };
}

describe('stub backbone', () => {
  it('emits ViT geometry: class token plus one token per 14px patch', () => {
    const bb = loadBackbone('stub:0');
    const out = bb.forward(normalize(syntheticImage(56, 70, 1)), [4, 8, 12]);
    expect(out).toHaveLength(3);
    for (const layer of out) {
      expect(layer.gridH).toBe(4);
      expect(layer.gridW).toBe(5);
      expect(layer.channels).toBe(384);
      expect(layer.tokens.length).toBe((1 + 4 * 5) * 384);
    }
  });

  it('is bit-deterministic across calls and instances', () => {
    const img = normalize(syntheticImage(28, 28, 2));
    const a = loadBackbone('stub:3').forward(img, [4, 8])[0].tokens;
    const b = loadBackbone('stub:3').forward(img, [4, 8])[0].tokens;
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true);
  });

  it('distinguishes seeds and layers', () => {
    const img = normalize(syntheticImage(28, 28, 2));
    const [l4, l8] = loadBackbone('stub:3').forward(img, [4, 8]);
    expect(Buffer.from(l4.tokens.buffer).equals(Buffer.from(l8.tokens.buffer))).toBe(false);
    const other = loadBackbone('stub:4').forward(img, [4])[0].tokens;
    expect(Buffer.from(l4.tokens.buffer).equals(Buffer.from(other.buffer))).toBe(false);
  });

  it('rejects off-grid inputs, bad layers, and unknown models', () => {
    const bb = loadBackbone('stub:0');
    expect(() => bb.forward(syntheticImage(30, 28, 1), [4])).toThrow(/multiple of patch/);
    expect(() => bb.forward(syntheticImage(28, 28, 1), [13])).toThrow(/out of range/);
    expect(() => bb.forward(syntheticImage(28, 28, 1), [0])).toThrow(/out of range/);
    expect(() => loadBackbone('dino-vits14')).toThrow(/not available/);
    expect(() => loadBackbone('stub:x')).toThrow(/bad stub seed/);
  });
});
