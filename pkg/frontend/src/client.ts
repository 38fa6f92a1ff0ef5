/**
 * HTTP client for the fetaug service.
 *
 * Every call is array-in/array-out: float32 volumes and heatmap stacks
 * travel as base64 little-endian x-fastest bytes and are therefore
 * bit-identical to what the core library computes.  The pipeline call
 * takes the same (seed, index) pair the CLI uses per sample, so a
 * training loop can replay any CLI-produced sample exactly.
 *
 * The client is stateless; concurrent calls from multiple workers are
 * safe and independent.
 */

import {
  maskToPayload,
  payloadToVolume,
  volumeToPayload,
  decodeFloat32,
  encodeFloat32,
  type VolumePayload,
} from "./encoding.js";
import {
  assertKeypointTable,
  volumeLength,
  N_KEYPOINTS,
  type AugmentConfig,
  type BoundSample,
  type Dims,
  type HeatmapStack,
  type KeypointTable,
  type PckReport,
  type PckSeries,
  type PipelineResult,
} from "./types.js";

/** Error raised for service-reported failures, carrying the error code. */
export class FetaugServiceError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(`[${code}] ${message}`);
    this.name = "FetaugServiceError";
    this.code = code;
    this.status = status;
  }
}

interface WireHeatmap {
  dims: Dims;
  sigma_vox: number;
  valid: boolean[];
  dtype: "float32";
  channels_b64: string;
}

export interface FetaugClientOptions {
  fetchImpl?: typeof fetch;
}

export class FetaugClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: typeof fetch;

  constructor(baseUrl: string, options: FetaugClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      let code = `http_${response.status}`;
      let message = response.statusText;
      try {
        const payload = (await response.json()) as { code?: string; message?: string; detail?: unknown };
        code = payload.code ?? code;
        message = payload.message ?? JSON.stringify(payload.detail ?? payload);
      } catch {
        /* non-JSON error body */
      }
      throw new FetaugServiceError(code, message, response.status);
    }
    return (await response.json()) as T;
  }

  async health(): Promise<{ status: string; version: string }> {
    const response = await this.fetchImpl(`${this.baseUrl}/v1/health`);
    if (!response.ok) {
      throw new FetaugServiceError(`http_${response.status}`, response.statusText, response.status);
    }
    return (await response.json()) as { status: string; version: string };
  }

  /**
   * Run the augmentation pipeline on one sample.
   *
   * Numerically identical to the core library (and to the CLI sample
   * written with the same seed and per-sample index).
   */
  async applyPipeline(
    sample: BoundSample,
    config: AugmentConfig,
    seed: number,
    index = 0,
  ): Promise<PipelineResult> {
    assertKeypointTable(sample.keypoints);
    const body: Record<string, unknown> = {
      volume: volumeToPayload(sample.volume),
      keypoints: sample.keypoints,
      heatmap_sigma: sample.heatmapSigma,
      provenance: sample.provenance,
      config,
      seed,
      index,
    };
    if (sample.bodyMask) {
      body.body_mask = maskToPayload(sample.bodyMask);
    }
    const wire = await this.post<{
      volume: VolumePayload;
      keypoints: KeypointTable;
      heatmap_sigma: number;
      provenance: "raw" | "inpainted";
      log: Record<string, unknown>[];
    }>("/v1/pipeline/apply", body);
    return {
      volume: payloadToVolume(wire.volume),
      keypoints: wire.keypoints,
      heatmapSigma: wire.heatmap_sigma,
      provenance: wire.provenance,
      log: wire.log,
    };
  }

  /** Ground-truth Gaussian heatmaps for a keypoint table. */
  async synthesizeHeatmaps(
    keypoints: KeypointTable,
    dims: Dims,
    sigmaVox: number,
  ): Promise<HeatmapStack> {
    assertKeypointTable(keypoints);
    const wire = await this.post<WireHeatmap>("/v1/heatmaps/synthesize", {
      keypoints,
      dims,
      sigma_vox: sigmaVox,
    });
    return {
      dims: wire.dims,
      sigmaVox: wire.sigma_vox,
      valid: wire.valid,
      channels: decodeFloat32(wire.channels_b64, N_KEYPOINTS * volumeLength(wire.dims)),
    };
  }

  /** Sub-voxel keypoints from a (possibly predicted) heatmap stack. */
  async extractKeypoints(stack: HeatmapStack): Promise<KeypointTable> {
    const wire = await this.post<{ keypoints: KeypointTable }>("/v1/heatmaps/extract", {
      heatmap: {
        dims: stack.dims,
        sigma_vox: stack.sigmaVox,
        valid: stack.valid,
        dtype: "float32",
        channels_b64: encodeFloat32(stack.channels),
      },
    });
    return wire.keypoints;
  }

  /** PCK report over acquisition series; same JSON as the CLI report. */
  async evalPck(series: PckSeries[], tauMm = 10.0): Promise<PckReport> {
    return this.post<PckReport>("/v1/eval/pck", {
      series: series.map((s) => ({
        acquisition_id: s.acquisitionId,
        spacing: s.spacing,
        ga_weeks: s.gaWeeks ?? null,
        frames: s.frames.map((f) => ({
          prediction: f.prediction,
          ground_truth: f.groundTruth,
        })),
      })),
      tau_mm: tauMm,
    });
  }
}
