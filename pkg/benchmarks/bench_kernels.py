#!/usr/bin/env python3
"""Benchmark: compiled kernel core vs the pure numpy fallback.

Times the raw window kernels (gather / scatter / magnitude max pool) and a
full U-Net training step per backend. The GEMM contraction goes to BLAS
under both backends, so the deltas shown here isolate the window-movement
cost that the compiled core exists for.

Usage: python benchmarks/bench_kernels.py [--image-size 32] [--batch 16]
"""

import argparse
import time
import warnings

import numpy as np

from cdtikit.backends import get_backend


def timeit(fn, repeats=5):
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def bench_kernels(image_size, batch):
    rng = np.random.default_rng(0)
    shapes = {
        f"2d {batch}x56x{image_size}^2 k3": ((batch, 56, image_size + 2, image_size + 2), (3, 3), (1, 1)),
        f"3d {batch}x16x2x{image_size}^2 k3": ((batch, 16, 4, image_size + 2, image_size + 2), (3, 3, 3), (1, 1, 1)),
    }
    backends = {}
    backends["numpy"] = get_backend("numpy")
    try:
        backends["compiled"] = get_backend("compiled")
    except ImportError:
        print("compiled backend not built; showing numpy only")

    header = f"{'kernel':38s}" + "".join(f"{name:>12s}" for name in backends)
    print(header)
    print("-" * len(header))
    for label, (shape, kernel, stride) in shapes.items():
        for complex_, tag in ((False, "f64"), (True, "c128")):
            x = rng.standard_normal(shape)
            if complex_:
                x = x + 1j * rng.standard_normal(shape)
            cols = backends["numpy"].im2col(x, kernel, stride)
            row = {"im2col": [], "col2im": []}
            for be in backends.values():
                row["im2col"].append(timeit(lambda be=be: be.im2col(x, kernel, stride)))
                row["col2im"].append(
                    timeit(lambda be=be: be.col2im(cols, kernel, stride, shape[2:], shape[0]))
                )
            for op, times in row.items():
                print(f"{op} {label} {tag:5s}".ljust(38)
                      + "".join(f"{t:10.2f}ms" for t in times))
    x = rng.standard_normal((batch, 56, image_size, image_size)) * (1 + 1j)
    times = [
        timeit(lambda be=be: be.maxpool_mag_forward(x, (2, 2), (2, 2)))
        for be in backends.values()
    ]
    print("maxpool_mag c128".ljust(38) + "".join(f"{t:10.2f}ms" for t in times))


def bench_training_step(image_size, batch):
    import os

    from cdtikit.nn import unet
    from cdtikit.nn.unet import ModelConfig
    from cdtikit.tensor import Tensor
    from cdtikit.training import Adam, TrainConfig, training_loss

    print()
    print(f"full training step (batch {batch}, {image_size}x{image_size}), "
          f"active backend: {os.environ.get('CDTIKIT_BACKEND', 'auto')}")
    rng = np.random.default_rng(0)
    for dim, mode in (("2d", "mag"), ("2d", "comp"), ("3d", "mag"), ("3d", "comp")):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = ModelConfig(dim=dim, data_mode=mode, slice_mode="all")
            net = unet.build(cfg, seed=0)
        tc = TrainConfig(model=cfg, epochs=1)
        adam = Adam(net.parameters())
        shape = (batch, cfg.io_channels()) + (
            (2, image_size, image_size) if dim == "3d" else (image_size, image_size)
        )
        xv = rng.random(shape)
        yv = rng.random(shape)
        if mode == "comp":
            xv = xv + 1j * rng.random(shape)
            yv = yv + 1j * rng.random(shape)
        x, y = Tensor(xv), Tensor(yv)

        def step():
            pred = net(x)
            loss = training_loss(pred, y, tc)
            net.zero_grad()
            loss.backward()
            adam.step(3e-4)

        print(f"  {cfg.name:14s} {timeit(step, repeats=3):8.0f} ms/step")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--image-size", type=int, default=32)
    ap.add_argument("--batch", type=int, default=16)
    args = ap.parse_args()
    bench_kernels(args.image_size, args.batch)
    bench_training_step(args.image_size, args.batch)
