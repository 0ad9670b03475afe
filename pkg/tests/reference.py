"""Independent reference computations shared by several test modules."""
import math

import numpy as np


def kalman(obs, gamma, alpha, sigma2, noise_var):
    """Textbook Kalman filter for a stationary OU signal observed with Gaussian noise.

    Returns arrays of filtered means, variances and per-step log predictive densities.
    """
    rate = sigma2 / alpha
    mean, var = gamma, alpha
    t_prev = obs[0].time
    out_m, out_v, out_l = [], [], []
    for o in obs:
        dt = o.time - t_prev
        t_prev = o.time
        decay = math.exp(-rate * dt)
        mean = gamma + (mean - gamma) * decay
        var = var * decay**2 + alpha * (1 - decay**2)
        s = var + noise_var
        out_l.append(-0.5 * math.log(2 * math.pi * s) - (o.y - mean) ** 2 / (2 * s))
        gain = var / s
        mean = mean + gain * (o.y - mean)
        var = (1 - gain) * var
        out_m.append(mean)
        out_v.append(var)
    return np.array(out_m), np.array(out_v), np.array(out_l)
