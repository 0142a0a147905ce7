"""Shared finite-difference oracles for the synthetic objective tests."""

import math

import numpy as np

from alignmtl.synthetic import LOG_CLAMP, synth_eval


def numeric_gradient(theta, h_scale=1e-6):
    """Central finite differences of both losses."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.zeros((2, 2))
    for i in range(2):
        h = h_scale * max(1.0, abs(theta[i]))
        up = theta.copy()
        up[i] += h
        dn = theta.copy()
        dn[i] -= h
        eu, ed = synth_eval(up), synth_eval(dn)
        g[i, 0] = (eu.L1 - ed.L1) / (2 * h)
        g[i, 1] = (eu.L2 - ed.L2) / (2 * h)
    return g


def near_nonsmooth(theta, margin=1e-4):
    """Whether theta sits within ``margin`` of a kink of either loss."""
    t1, t2 = theta
    u = math.tanh(-t2)
    a1 = 0.5 * (-t1 - 7.0) - u
    a2 = 0.5 * (-t1 + 3.0) + u + 2.0
    checks = [
        abs(a1), abs(a2),                                    # |.| kinks
        abs(abs(a1) - LOG_CLAMP), abs(abs(a2) - LOG_CLAMP),  # log clamp
        abs(t2),                                             # gate switch
    ]
    return min(checks) < margin
