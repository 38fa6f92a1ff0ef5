"""Throughput harness for the augmentation pipeline.

Measures apply_pipeline on float32 cubes with every augmentation enabled
(probability 1).  Work fans out over a process pool, the way training
data-loader workers do: sample i draws from ``substream(seed, i)``, so
results are identical for any worker count and the pool only buys wall
time.  (Threads cannot: parts of numpy/scipy hold the GIL.)
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor

from .augment import AugmentConfig, LabeledSample, apply_pipeline
from .phantom import PhantomSpec, make_phantom
from .seeding import substream

__all__ = ["all_on_config", "pipeline_throughput"]

_STATE: dict = {}


def all_on_config(crop_size: int = 64) -> AugmentConfig:
    return AugmentConfig(
        rotation_prob=1.0,
        scale_prob=1.0,
        bias_prob=1.0,
        gamma_prob=1.0,
        noise_prob=1.0,
        spike_prob=1.0,
        anisotropy_prob=1.0,
        crop_size=crop_size,
    )


def _make_sample(seed: int, dims: int) -> LabeledSample:
    spec = PhantomSpec(dims=(dims, dims, dims), spacing=(3.0, 3.0, 3.0))
    phantom = make_phantom(spec, substream(seed, 0), scale=0.8).sample
    # Training samples are volume + keypoints; masks stay in the bank path.
    return LabeledSample(
        volume=phantom.volume,
        keypoints=phantom.keypoints,
        heatmap_sigma=phantom.heatmap_sigma,
    )


def _worker_init(seed: int, dims: int) -> None:
    _STATE["sample"] = _make_sample(seed, dims)
    _STATE["cfg"] = all_on_config(crop_size=min(64, dims))
    _STATE["seed"] = seed


def _worker_run(index: int) -> float:
    out, _ = apply_pipeline(_STATE["sample"], _STATE["cfg"], substream(_STATE["seed"], index))
    return float(out.volume.data[0, 0, 0])


def pipeline_throughput(seed: int, count: int = 200, workers: int = 4, dims: int = 64) -> dict:
    if workers <= 1:
        _worker_init(seed, dims)
        _worker_run(0)  # warm-up: imports, FFT plan, allocator
        start = time.perf_counter()
        for i in range(count):
            _worker_run(i)
        elapsed = time.perf_counter() - start
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(seed, dims)
        ) as pool:
            # Warm-up round so per-process setup stays out of the window.
            list(pool.map(_worker_run, range(workers)))
            start = time.perf_counter()
            for _ in pool.map(_worker_run, range(count), chunksize=8):
                pass
            elapsed = time.perf_counter() - start
    return {
        "count": count,
        "workers": workers,
        "dims": dims,
        "seconds": round(elapsed, 3),
        "samples_per_second": round(count / elapsed, 2),
    }
