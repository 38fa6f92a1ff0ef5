/**
 * Shared types for the fetaug client.
 *
 * Array layout contract: volumes are dense 3D grids indexed [x, y, z],
 * linearized x-fastest (index = x + nx * (y + ny * z)) in a flat typed
 * array. That matches both the wire format and the package's NIfTI
 * files, so float32 data crosses every boundary bit-exactly.
 */

export const KEYPOINT_NAMES = [
  "bladder",
  "eye_L",
  "eye_R",
  "shoulder_L",
  "shoulder_R",
  "elbow_L",
  "elbow_R",
  "wrist_L",
  "wrist_R",
  "hip_L",
  "hip_R",
  "knee_L",
  "knee_R",
  "ankle_L",
  "ankle_R",
] as const;

export const N_KEYPOINTS = KEYPOINT_NAMES.length;

export type Dims = [number, number, number];
export type Spacing = [number, number, number];

export interface BoundVolume {
  dims: Dims;
  spacing: Spacing;
  /** Flat x-fastest voxel data; length nx * ny * nz. */
  data: Float32Array;
}

export interface BoundMask {
  dims: Dims;
  spacing: Spacing;
  data: Uint8Array;
}

/** 15 rows of (x, y, z, visible); visible is 0 or 1. */
export type KeypointTable = number[][];

export type Provenance = "raw" | "inpainted";

/** A labeled sample as the training loop sees it. */
export interface BoundSample {
  volume: BoundVolume;
  keypoints: KeypointTable;
  heatmapSigma: number;
  provenance: Provenance;
  bodyMask?: BoundMask;
}

/** Mirrors the service's augmentation configuration (all optional). */
export interface AugmentConfig {
  rotation_prob?: number;
  rotation_deg_range?: [number, number];
  scale_prob?: number;
  scale_range?: [number, number];
  bias_prob?: number;
  bias_order?: number;
  bias_coeff_range?: [number, number];
  gamma_prob?: number;
  log_gamma_range?: [number, number];
  noise_prob?: number;
  noise_sigma_frac_range?: [number, number];
  spike_prob?: number;
  spike_count_range?: [number, number];
  spike_strength_range?: [number, number];
  anisotropy_prob?: number;
  anisotropy_factor_range?: [number, number];
  crop_size?: number;
}

export interface PipelineResult extends BoundSample {
  /** Applied ops with their drawn parameters, in execution order. */
  log: Record<string, unknown>[];
}

export interface HeatmapStack {
  dims: Dims;
  sigmaVox: number;
  valid: boolean[];
  /** Channel-major: channel c occupies the c-th x-fastest block. */
  channels: Float32Array;
}

export interface PckFrame {
  prediction: KeypointTable;
  groundTruth: KeypointTable;
}

export interface PckSeries {
  acquisitionId: string;
  spacing: Spacing;
  gaWeeks?: number;
  frames: PckFrame[];
}

/** The evaluation report as emitted by the service (JSON document). */
export type PckReport = Record<string, unknown>;

export function assertKeypointTable(table: KeypointTable): void {
  if (table.length !== N_KEYPOINTS) {
    throw new RangeError(`keypoint table must have ${N_KEYPOINTS} rows, got ${table.length}`);
  }
  for (const row of table) {
    if (row.length !== 4) {
      throw new RangeError(`keypoint rows must be (x, y, z, visible), got ${row.length} values`);
    }
  }
}

export function volumeLength(dims: Dims): number {
  return dims[0] * dims[1] * dims[2];
}

/** Value at integer voxel (x, y, z) of a flat x-fastest volume. */
export function voxelAt(volume: BoundVolume, x: number, y: number, z: number): number {
  const [nx, ny] = volume.dims;
  return volume.data[x + nx * (y + ny * z)];
}
