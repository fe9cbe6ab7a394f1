"""Compare the compiled and numpy kernel backends.

Times im2col, col2im and max-pooling on the shapes the default model sees,
plus one forward/backward pass of the compound loss, and checks that both
backends give bit-identical outputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 32]
"""

import argparse
import timeit

import numpy as np

from caem import _kernels as K
from caem import config as C
from caem import tensor as T
from caem.model import CAEM


def kernel_cases(batch, rng):
    # first conv of the default model: 1 -> 8 channels on a padded 6 x 16 step image
    x1 = rng.standard_normal((batch * 5, 1, 9, 19))
    # second conv: 8 -> 16 channels after pooling
    x2 = rng.standard_normal((batch * 5, 8, 6, 11))
    pooled = rng.standard_normal((batch * 5, 16, 6, 16))
    cols1 = K.get_module("python").im2col(x1, 4, 4, 1, 1)
    return {
        "im2col conv1": lambda: K.im2col(x1, 4, 4, 1, 1),
        "im2col conv2": lambda: K.im2col(x2, 4, 4, 1, 1),
        "col2im conv1": lambda: K.col2im(cols1, 1, 9, 19, 4, 4, 1, 1),
        "maxpool 2x2": lambda: K.maxpool_forward(pooled, 2, 2),
    }


def model_step(batch, rng):
    cfg = C.load_config()
    model = CAEM(C.model_config(cfg, 6))
    x = rng.standard_normal((batch, 5, 6, 16))
    target = rng.standard_normal((batch * 5, cfg["model"]["latent_dim"]))

    def step():
        for p in model.parameters():
            p.zero_grad()
        loss = model.compound_loss(x, np.random.default_rng(0), mmd_target=target)
        T.backward(loss.total)
        return loss.total.item()
    return step


def best_of(fn, repeat):
    fn()
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def _arrays(result):
    return [np.asarray(r) for r in (result if isinstance(result, tuple) else (result,))]


def outputs_match(cases):
    out = {}
    for name in ("python", "cython"):
        K.set_backend(name)
        out[name] = {k: _arrays(fn()) for k, fn in cases.items()}
    return all(np.array_equal(a, b) for k in cases for a, b in zip(out["python"][k], out["cython"][k]))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--batch", type=int, default=32)
    args = parser.parse_args(argv)

    backends = K.available_backends()
    print(f"backends: {', '.join(backends)}")
    rng = np.random.default_rng(0)
    cases = kernel_cases(args.batch, rng)
    cases[f"loss fwd+bwd (batch {args.batch})"] = model_step(args.batch, rng)

    times = {}
    for name in backends:
        K.set_backend(name)
        times[name] = {k: best_of(fn, args.repeat) for k, fn in cases.items()}

    width = max(len(k) for k in cases)
    header = f"{'case':<{width}}  " + "  ".join(f"{b:>10}" for b in backends)
    if "cython" in times:
        header += f"  {'speedup':>8}"
    print(header)
    for k in cases:
        row = f"{k:<{width}}  " + "  ".join(f"{times[b][k] * 1e3:>8.3f}ms" for b in backends)
        if "cython" in times:
            row += f"  {times['python'][k] / times['cython'][k]:>7.2f}x"
        print(row)
    if "cython" in times:
        print(f"bit-identical outputs: {outputs_match(cases)}")


if __name__ == "__main__":
    main()
