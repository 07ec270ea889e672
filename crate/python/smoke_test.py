"""Smoke test for the upit_py extension.

Build and install first, e.g. `pip install --no-build-isolation ./crates/python`.
Pass a checkpoint path as the first argument to also exercise Separator.
"""

import math
import random
import sys

import upit_py


def main():
    rng = random.Random(0)
    x = [rng.uniform(-1.0, 1.0) for _ in range(4000)]

    mag, phase = upit_py.stft(x)
    assert len(mag[0]) == 129 and len(mag) == len(phase)
    y = upit_py.istft(mag, phase, len(x))
    err = max(abs(a - b) for a, b in zip(x, y))
    assert err < 1e-9, err

    assert upit_py.sdr(x, x) == 100.0
    assert abs(upit_py.estoi(x, x) - 1.0) < 1e-6

    burst = [
        (0.6 + 0.4 * math.sin(9 * i / 8000)) * math.sin(2 * math.pi * 200 * i / 8000) if 2000 <= i < 6000 else 0.0
        for i in range(8000)
    ]
    a = upit_py.active_speech_level(burst)
    b = upit_py.active_speech_level([0.1 * v for v in burst])
    assert abs((a - b) - 20.0) < 1e-6, (a, b)

    k, f = 4, 5
    grid = lambda: [[rng.uniform(0.0, 2.0) for _ in range(f)] for _ in range(k)]
    targets = [grid(), grid()]
    r = [[1.0] * f for _ in range(k)]
    mapping, loss = upit_py.upit_permutation([targets[1], targets[0]], r, targets)
    assert mapping == [1, 0] and loss < 1e-24, (mapping, loss)

    if len(sys.argv) > 1:
        sep = upit_py.Separator(sys.argv[1])
        outs = sep.separate(x)
        assert len(outs) == sep.num_outputs and all(len(o) == len(x) for o in outs)

    print("upit_py smoke test passed")


if __name__ == "__main__":
    main()
