// Binary token container shared with the training/scoring side.
//
// Layout (all integers and floats little-endian):
//   magic "VARTOK1\0" (8 bytes)
//   u32 version = 1
//   u32 source image height, u32 source image width
//   u32 hierarchy count
//   per hierarchy: u32 C, u32 H, u32 W, then C*H*W f32 values,
//   channel-major then row-major (C-order [C, H, W])

import * as fs from 'fs';

export const TOKEN_MAGIC = Buffer.from('VARTOK1\0', 'latin1');
export const TOKEN_VERSION = 1;

export interface TokenGrid {
  channels: number;
  height: number;
  width: number;
  /** value for (c, y, x) lives at data[c*height*width + y*width + x] */
  data: Float32Array;
}

export interface TokenFile {
  sourceH: number;
  sourceW: number;
  grids: TokenGrid[];
}

export class TokenFileError extends Error {}

export function encodeTokenFile(grids: TokenGrid[], sourceH: number, sourceW: number): Buffer {
  let total = TOKEN_MAGIC.length + 16;
  for (const g of grids) {
    const n = g.channels * g.height * g.width;
    if (g.data.length !== n) {
      throw new TokenFileError(
        `grid data has ${g.data.length} values, shape says ${g.channels}x${g.height}x${g.width}`);
    }
    total += 12 + 4 * n;
  }
  const buf = Buffer.alloc(total);
  TOKEN_MAGIC.copy(buf, 0);
  let off = TOKEN_MAGIC.length;
  off = buf.writeUInt32LE(TOKEN_VERSION, off);
  off = buf.writeUInt32LE(sourceH, off);
  off = buf.writeUInt32LE(sourceW, off);
  off = buf.writeUInt32LE(grids.length, off);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  for (const g of grids) {
    off = buf.writeUInt32LE(g.channels, off);
    off = buf.writeUInt32LE(g.height, off);
    off = buf.writeUInt32LE(g.width, off);
    for (let i = 0; i < g.data.length; i++) {
      view.setFloat32(off, g.data[i], true);
      off += 4;
    }
  }
  return buf;
}

export function decodeTokenFile(buf: Buffer): TokenFile {
  if (buf.length < TOKEN_MAGIC.length || !buf.subarray(0, TOKEN_MAGIC.length).equals(TOKEN_MAGIC)) {
    throw new TokenFileError('not a token file (bad magic)');
  }
  let off = TOKEN_MAGIC.length;
  const need = (n: number) => {
    if (off + n > buf.length) throw new TokenFileError('unexpected end of token payload');
  };
  need(16);
  const version = buf.readUInt32LE(off); off += 4;
  if (version !== TOKEN_VERSION) {
    throw new TokenFileError(`unsupported token file version ${version}`);
  }
  const sourceH = buf.readUInt32LE(off); off += 4;
  const sourceW = buf.readUInt32LE(off); off += 4;
  const count = buf.readUInt32LE(off); off += 4;
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  const grids: TokenGrid[] = [];
  for (let k = 0; k < count; k++) {
    need(12);
    const channels = buf.readUInt32LE(off); off += 4;
    const height = buf.readUInt32LE(off); off += 4;
    const width = buf.readUInt32LE(off); off += 4;
    const n = channels * height * width;
    need(4 * n);
    const data = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      data[i] = view.getFloat32(off, true);
      off += 4;
    }
    grids.push({ channels, height, width, data });
  }
  return { sourceH, sourceW, grids };
}

export function writeTokenFile(file: string, grids: TokenGrid[], sourceH: number, sourceW: number): Buffer {
  const buf = encodeTokenFile(grids, sourceH, sourceW);
  fs.writeFileSync(file, buf);
  return buf;
}

export function readTokenFile(file: string): TokenFile {
  return decodeTokenFile(fs.readFileSync(file));
}
