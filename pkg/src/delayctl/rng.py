"""Counter-based Gaussian increments.

The normal draw for ``(seed, step, path, component)`` comes from the Philox
block at counter ``path * blocks_per_path + component // 4`` under the key
``(seed, step)``. Each block yields four 64-bit words that become four normals
via Box-Muller, so any path range can be generated on its own and matches the
corresponding slice of a full generation exactly.
"""

from __future__ import annotations

import numpy as np

_TWO53 = float(2 ** 53)


def substream(seed: int, *labels: int) -> int:
    """Derive an independent 64-bit seed from ``seed`` and integer labels."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(x) for x in labels))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _blocks_per_path(d: int) -> int:
    return (d + 3) // 4


def standard_normals(seed: int, step: int, path_start: int, path_stop: int, d: int) -> np.ndarray:
    """Standard normals of shape ``(path_stop - path_start, d)`` for one time step."""
    n = path_stop - path_start
    if n <= 0:
        return np.empty((0, d))
    bpp = _blocks_per_path(d)
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(step)], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    if path_start:
        bg.advance(path_start * bpp)
    raw = bg.random_raw(4 * bpp * n).reshape(n, bpp, 2, 2)
    # 53-bit uniforms in (0, 1]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) / _TWO53
    r = np.sqrt(-2.0 * np.log(u[..., 0]))
    theta = 2.0 * np.pi * u[..., 1]
    z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    return z.reshape(n, 4 * bpp)[:, :d]


def brownian_increments(seed: int, step: int, path_start: int, path_stop: int, d: int,
                        h: float) -> np.ndarray:
    return np.sqrt(h) * standard_normals(seed, step, path_start, path_stop, d)
