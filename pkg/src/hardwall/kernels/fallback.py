"""Pure-Python (numpy) heat-bath kernel, bit-identical to the compiled one.

Sites of one parity share no edges, so the vectorized update equals the
sequential site loop of the compiled kernel.
"""

import numpy as np
from scipy.special import ndtr, ndtri


def sweep_parity(field, wall, u, idx, offsets, inv2d):
    """Update field in place at the flat indices ``idx``.

    Returns -1 on success, else the first flat index where the truncated
    tail is numerically unreachable.
    """
    acc = np.zeros(idx.shape[0])
    for off in offsets:
        acc = acc + field[idx + off]
    mean = acc * inv2d
    p = ndtr(mean - wall[idx])
    up = u[idx] * p
    bad = np.nonzero(up <= 0.0)[0]
    if bad.size:
        return int(idx[bad[0]])
    field[idx] = mean - ndtri(up)
    return -1
