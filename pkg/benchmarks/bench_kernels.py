"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 50]

Also times one AR pipeline frame with each backend against the 16 ms frame budget.
"""

import argparse
import time

import numpy as np

from selfsteer import kernels
from selfsteer.dsp import StftConfig, stft
from selfsteer.geom import circular_array, default_band
from selfsteer.pipeline import PipelineConfig, run_ar
from selfsteer.scene import ScenarioTemplate, generate_scenario


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    cfg = StftConfig()
    geom = circular_array()
    frame = rng.standard_normal((3, cfg.bins)) + 1j * rng.standard_normal((3, cfg.bins))
    az = rng.uniform(-np.pi, np.pi, 50)
    tau = np.ascontiguousarray(geom.tdoa(az))
    k0, k1 = default_band(cfg)
    w = rng.random(50)
    w /= w.sum()
    src = rng.standard_normal(80000)
    delay = np.linspace(10.0, 40.0, src.size)
    gain = np.full(src.size, 0.5)
    return {
        "das_powers (50 az)": lambda b: b.das_powers(frame, tau, cfg.bin_hz, k0, k1),
        "systematic_indices (50)": lambda b: b.systematic_indices(w, 0.37),
        "fractional_delay (80k)": lambda b: b.fractional_delay(src, delay, gain),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    backends = [("python", kernels.python)]
    if kernels.compiled is not None:
        backends.insert(0, ("cython", kernels.compiled))
    else:
        print("compiled extension not loaded; timing the numpy fallback only")

    print(f"{'kernel':<26}" + "".join(f"{n:>12}" for n, _ in backends) + "     speedup")
    for name, case in kernel_cases(rng).items():
        ts = [_best(lambda: case(b), args.repeat) for _, b in backends]
        line = f"{name:<26}" + "".join(f"{t * 1e6:>10.1f}us" for t in ts)
        if len(ts) == 2:
            line += f"  {ts[1] / ts[0]:>9.1f}x"
        print(line)

    truth = generate_scenario(ScenarioTemplate(frames=100), seed=1)
    spec = stft(truth.mixture)
    cfg = PipelineConfig()
    t0 = time.perf_counter()
    trace = run_ar(spec, cfg, truth)
    per_frame = (time.perf_counter() - t0) / trace.frames
    print(f"AR pipeline ({kernels.BACKEND} backend): {per_frame * 1e3:.2f} ms/frame "
          f"(budget 16 ms, {16e-3 / per_frame:.0f}x headroom)")


if __name__ == "__main__":
    main()
