/**
 * Minimal NIfTI-1 reader matching the core engine's file subset:
 * uncompressed single-file .nii, little-endian, magic "n+1", dim[0] = 3,
 * vox_offset 352, datatypes uint8 / int16 / float32.  Voxels on disk are
 * x-fastest, identical to the in-memory layout, so float32 volumes load
 * without any reordering.
 */

import type { BoundMask, BoundVolume, Dims, Spacing } from "./types.js";

const HEADER_SIZE = 348;
const VOX_OFFSET = 352;

interface Header {
  dims: Dims;
  spacing: Spacing;
  datatype: number;
  sclSlope: number;
  sclInter: number;
}

function parseHeader(buf: ArrayBuffer, name: string): Header {
  if (buf.byteLength < HEADER_SIZE) {
    throw new Error(`${name}: truncated header (${buf.byteLength} bytes)`);
  }
  const view = new DataView(buf);
  const magic = new Uint8Array(buf, 344, 4);
  const magicText = String.fromCharCode(magic[0], magic[1], magic[2]);
  if (magicText === "ni1") {
    throw new Error(`${name}: detached header/image pairs not supported`);
  }
  if (magicText !== "n+1") {
    throw new Error(`${name}: bad magic ${JSON.stringify(magicText)}`);
  }
  if (view.getInt32(0, true) !== HEADER_SIZE) {
    throw new Error(`${name}: sizeof_hdr mismatch (big-endian or corrupt)`);
  }
  const ndim = view.getInt16(40, true);
  if (ndim !== 3) {
    throw new Error(`${name}: only 3D files supported, dim[0]=${ndim}`);
  }
  const dims: Dims = [
    view.getInt16(42, true),
    view.getInt16(44, true),
    view.getInt16(46, true),
  ];
  const spacing: Spacing = [
    view.getFloat32(80, true),
    view.getFloat32(84, true),
    view.getFloat32(88, true),
  ];
  if (Math.round(view.getFloat32(108, true)) !== VOX_OFFSET) {
    throw new Error(`${name}: unsupported vox_offset`);
  }
  return {
    dims,
    spacing,
    datatype: view.getInt16(70, true),
    sclSlope: view.getFloat32(112, true),
    sclInter: view.getFloat32(116, true),
  };
}

function toArrayBuffer(bytes: Uint8Array): ArrayBuffer {
  const buf = new ArrayBuffer(bytes.byteLength);
  new Uint8Array(buf).set(bytes);
  return buf;
}

export function readVolume(bytes: Uint8Array, name = "volume"): BoundVolume {
  const buf = toArrayBuffer(bytes);
  const header = parseHeader(buf, name);
  const count = header.dims[0] * header.dims[1] * header.dims[2];
  let data: Float32Array;
  if (header.datatype === 16) {
    if (buf.byteLength < VOX_OFFSET + count * 4) {
      throw new Error(`${name}: truncated data section`);
    }
    data = new Float32Array(buf.slice(VOX_OFFSET, VOX_OFFSET + count * 4));
  } else if (header.datatype === 4) {
    if (buf.byteLength < VOX_OFFSET + count * 2) {
      throw new Error(`${name}: truncated data section`);
    }
    const raw = new Int16Array(buf.slice(VOX_OFFSET, VOX_OFFSET + count * 2));
    const slope = header.sclSlope === 0 ? 1 : header.sclSlope;
    const inter = header.sclSlope === 0 ? 0 : header.sclInter;
    data = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      data[i] = Math.fround(Math.fround(raw[i] * slope) + inter);
    }
  } else {
    throw new Error(`${name}: unsupported datatype code ${header.datatype}`);
  }
  return { dims: header.dims, spacing: header.spacing, data };
}

export function readMask(bytes: Uint8Array, name = "mask"): BoundMask {
  const buf = toArrayBuffer(bytes);
  const header = parseHeader(buf, name);
  if (header.datatype !== 2) {
    throw new Error(`${name}: masks must be uint8, got datatype ${header.datatype}`);
  }
  const count = header.dims[0] * header.dims[1] * header.dims[2];
  if (buf.byteLength < VOX_OFFSET + count) {
    throw new Error(`${name}: truncated data section`);
  }
  return {
    dims: header.dims,
    spacing: header.spacing,
    data: new Uint8Array(buf.slice(VOX_OFFSET, VOX_OFFSET + count)),
  };
}
