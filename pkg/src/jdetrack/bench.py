"""Association-step throughput on synthetic scenarios.

Only ``Tracker.step`` is timed; scenario generation and any file I/O happen
before the clock starts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .simulate import ScenarioConfig, generate_scenario
from .tracker import STAGES, Tracker, TrackerConfig


@dataclass
class BenchResult:
    targets: int
    frames: int
    detections: int
    fps: float
    mean_ms: float
    p99_ms: float
    stage_ms: dict[str, float] = field(default_factory=dict)

    def as_row(self) -> list[str]:
        return [
            str(self.targets),
            str(self.frames),
            f"{self.fps:.1f}",
            f"{self.mean_ms:.3f}",
            f"{self.p99_ms:.3f}",
        ] + [f"{self.stage_ms[s]:.3f}" for s in STAGES]


BENCH_HEADER = ["targets", "frames", "FPSA", "mean_ms", "p99_ms"] + [f"{s}_ms" for s in STAGES]


def bench_density(
    n_targets: int,
    n_frames: int = 200,
    seed: int = 0,
    config: TrackerConfig | None = None,
    embed_dim: int = 128,
    warmup: int = 5,
) -> BenchResult:
    scenario = generate_scenario(
        ScenarioConfig(
            n_frames=n_frames + warmup,
            n_targets=n_targets,
            p_miss=0.05,
            fp_rate=1.0,
            box_jitter_std=1.0,
            embed_dim=embed_dim,
            embed_noise_std=0.05,
            seed=seed,
        )
    )
    tracker = Tracker(config or TrackerConfig())
    latencies = []
    for k, dets in enumerate(scenario.frames):
        if k == warmup:
            tracker.timings.clear()
        t0 = time.perf_counter()
        tracker.step(k + 1, dets)
        if k >= warmup:
            latencies.append(time.perf_counter() - t0)
    lat = np.array(latencies)
    frames = len(lat)
    return BenchResult(
        targets=n_targets,
        frames=frames,
        detections=sum(len(f) for f in scenario.frames[warmup:]),
        fps=frames / lat.sum() if frames else 0.0,
        mean_ms=1e3 * float(lat.mean()) if frames else 0.0,
        p99_ms=1e3 * float(np.percentile(lat, 99)) if frames else 0.0,
        stage_ms={s: 1e3 * tracker.timings[s] / max(frames, 1) for s in STAGES},
    )


def bench_sweep(densities=(10, 30, 60), **kwargs) -> list[BenchResult]:
    return [bench_density(d, **kwargs) for d in densities]
