import { execFileSync } from "node:child_process";
import { readFileSync } from "node:fs";
import { join } from "node:path";

import { readMask, readVolume } from "../src/nifti.js";
import { KEYPOINT_NAMES, type BoundSample, type KeypointTable } from "../src/types.js";

export function serviceUrl(): string {
  const port = Number(process.env.FETAUG_PORT ?? "8731");
  return `http://127.0.0.1:${port}`;
}

export function runCli(args: string[]): Record<string, unknown> {
  const stdout = execFileSync("python3", ["-m", "fetaug.cli", ...args], {
    encoding: "utf8",
    maxBuffer: 64 * 1024 * 1024,
  });
  const lines = stdout.split("\n").filter((l) => l.trim().length > 0);
  return JSON.parse(lines[lines.length - 1]) as Record<string, unknown>;
}

export interface KeypointDoc {
  table: KeypointTable;
  heatmapSigma: number | null;
  provenance: string | null;
  acquisitionId: string;
  gaWeeks: number | null;
}

export function readKeypointDoc(path: string): KeypointDoc {
  const doc = JSON.parse(readFileSync(path, "utf8")) as {
    keypoints: Record<string, { x: number; y: number; z: number; visible: boolean }>;
    heatmap_sigma?: number;
    provenance?: string;
    acquisition_id?: string;
    ga_weeks?: number;
  };
  const table = KEYPOINT_NAMES.map((name) => {
    const entry = doc.keypoints[name];
    return [entry.x, entry.y, entry.z, entry.visible ? 1 : 0];
  });
  return {
    table,
    heatmapSigma: doc.heatmap_sigma ?? null,
    provenance: doc.provenance ?? null,
    acquisitionId: doc.acquisition_id ?? "",
    gaWeeks: doc.ga_weeks ?? null,
  };
}

export interface ManifestRow {
  id: string;
  volume?: string;
  keypoints: string;
  body_mask?: string;
  [key: string]: unknown;
}

export function readManifest(dir: string): ManifestRow[] {
  const doc = JSON.parse(readFileSync(join(dir, "manifest.json"), "utf8")) as {
    samples: ManifestRow[];
  };
  return doc.samples;
}

export function loadSample(dir: string, row: ManifestRow): BoundSample {
  if (!row.volume) {
    throw new Error(`sample ${row.id} has no volume`);
  }
  const volume = readVolume(readFileSync(join(dir, row.volume)), row.volume);
  const doc = readKeypointDoc(join(dir, row.keypoints));
  const sample: BoundSample = {
    volume,
    keypoints: doc.table,
    heatmapSigma: doc.heatmapSigma ?? 2.0,
    provenance: (doc.provenance ?? "raw") as BoundSample["provenance"],
  };
  if (row.body_mask) {
    sample.bodyMask = readMask(readFileSync(join(dir, row.body_mask)), row.body_mask);
  }
  return sample;
}
