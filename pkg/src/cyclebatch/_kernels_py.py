"""Pure-Python (numpy/scipy) versions of the compiled kernels."""
import numpy as np
from scipy.signal import lfilter


def quad_chain(centers, idx, theta, eta, out):
    idx = np.asarray(idx)
    steps, batch = idx.shape
    if out.shape[0] < steps:
        raise ValueError("output buffer shorter than index array")
    if steps == 0:
        return theta
    means = np.asarray(centers)[idx].sum(axis=1) / batch
    # theta_{t+1} = (1 - eta) * theta_t + eta * mean_t
    traj, _ = lfilter([eta], [1.0, -(1.0 - eta)], means, zi=[(1.0 - eta) * theta])
    out[:steps] = traj
    return float(traj[-1])
