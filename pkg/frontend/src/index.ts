export { FetaugClient, FetaugServiceError, type FetaugClientOptions } from "./client.js";
export {
  decodeFloat32,
  decodeUint8,
  encodeFloat32,
  encodeUint8,
  maskToPayload,
  payloadToVolume,
  volumeToPayload,
  type MaskPayload,
  type VolumePayload,
} from "./encoding.js";
export { readMask, readVolume } from "./nifti.js";
export {
  KEYPOINT_NAMES,
  N_KEYPOINTS,
  assertKeypointTable,
  volumeLength,
  voxelAt,
  type AugmentConfig,
  type BoundMask,
  type BoundSample,
  type BoundVolume,
  type Dims,
  type HeatmapStack,
  type KeypointTable,
  type PckFrame,
  type PckReport,
  type PckSeries,
  type PipelineResult,
  type Provenance,
  type Spacing,
} from "./types.js";

export const CLIENT_VERSION = "0.1.0";
