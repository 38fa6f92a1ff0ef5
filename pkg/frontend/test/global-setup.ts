/**
 * Spawns the Python service for the duration of the test run.
 *
 * Requires the fetaug package to be importable by `python3` (pip install
 * -e .. from the repository root).  The port can be pinned with
 * FETAUG_PORT; otherwise 8731 is used.
 */

import { spawn, type ChildProcess } from "node:child_process";

const PORT = Number(process.env.FETAUG_PORT ?? "8731");

export const SERVICE_URL = `http://127.0.0.1:${PORT}`;

async function waitForHealth(url: string, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${url}/v1/health`);
      if (response.ok) {
        return;
      }
    } catch (error) {
      lastError = error;
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`service did not come up at ${url}: ${lastError}`);
}

export default async function setup(): Promise<() => Promise<void>> {
  const child: ChildProcess = spawn(
    "python3",
    ["-m", "fetaug.cli", "serve", "--port", String(PORT)],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  try {
    await waitForHealth(SERVICE_URL, 30_000);
  } catch (error) {
    child.kill("SIGTERM");
    throw error;
  }
  // Tests read the pid to watch the serving process's memory.
  const { writeFileSync } = await import("node:fs");
  const { tmpdir } = await import("node:os");
  const { join } = await import("node:path");
  writeFileSync(join(tmpdir(), `fetaug-service-${PORT}.pid`), String(child.pid));
  return async () => {
    child.kill("SIGTERM");
    await new Promise((resolve) => setTimeout(resolve, 300));
    if (!child.killed) {
      child.kill("SIGKILL");
    }
  };
}
