/**
 * Base64 array transport.
 *
 * The wire format is little-endian bytes of the flat x-fastest array.
 * Decoding allocates exactly one typed array over a fresh buffer (the
 * single explicit copy at the boundary); no reinterpretation of
 * mismatched layouts ever happens silently.
 */

import { Buffer } from "node:buffer";

import { volumeLength, type BoundMask, type BoundVolume, type Dims, type Spacing } from "./types.js";

function ensureLittleEndian(): void {
  const probe = new Uint8Array(new Uint16Array([1]).buffer);
  if (probe[0] !== 1) {
    throw new Error("big-endian hosts need byte swapping, which this client does not implement");
  }
}

export function encodeFloat32(data: Float32Array): string {
  ensureLittleEndian();
  return Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64");
}

export function decodeFloat32(b64: string, expectedLength: number): Float32Array {
  ensureLittleEndian();
  const raw = Buffer.from(b64, "base64");
  if (raw.byteLength !== expectedLength * 4) {
    throw new RangeError(
      `payload holds ${raw.byteLength} bytes, expected ${expectedLength * 4}`,
    );
  }
  const copy = new Uint8Array(raw.byteLength);
  copy.set(raw);
  return new Float32Array(copy.buffer);
}

export function encodeUint8(data: Uint8Array): string {
  return Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64");
}

export function decodeUint8(b64: string, expectedLength: number): Uint8Array {
  const raw = Buffer.from(b64, "base64");
  if (raw.byteLength !== expectedLength) {
    throw new RangeError(`payload holds ${raw.byteLength} bytes, expected ${expectedLength}`);
  }
  const copy = new Uint8Array(raw.byteLength);
  copy.set(raw);
  return copy;
}

export interface VolumePayload {
  dims: Dims;
  spacing: Spacing;
  dtype: "float32";
  data_b64: string;
}

export interface MaskPayload {
  dims: Dims;
  spacing: Spacing;
  dtype: "uint8";
  data_b64: string;
}

export function volumeToPayload(volume: BoundVolume): VolumePayload {
  const expected = volumeLength(volume.dims);
  if (volume.data.length !== expected) {
    throw new RangeError(`volume data length ${volume.data.length} does not match dims ${volume.dims}`);
  }
  return {
    dims: volume.dims,
    spacing: volume.spacing,
    dtype: "float32",
    data_b64: encodeFloat32(volume.data),
  };
}

export function payloadToVolume(payload: VolumePayload): BoundVolume {
  return {
    dims: payload.dims,
    spacing: payload.spacing,
    data: decodeFloat32(payload.data_b64, volumeLength(payload.dims)),
  };
}

export function maskToPayload(mask: BoundMask): MaskPayload {
  const expected = volumeLength(mask.dims);
  if (mask.data.length !== expected) {
    throw new RangeError(`mask data length ${mask.data.length} does not match dims ${mask.dims}`);
  }
  return {
    dims: mask.dims,
    spacing: mask.spacing,
    dtype: "uint8",
    data_b64: encodeUint8(mask.data),
  };
}
