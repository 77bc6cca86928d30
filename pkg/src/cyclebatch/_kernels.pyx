# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop for the quadratic noise-scale chain."""
from libc.stdint cimport int64_t


def quad_chain(const double[::1] centers, const int64_t[:, ::1] idx,
               double theta, double eta, double[::1] out):
    """Advance the chain one step per row of ``idx``; returns the last theta.

    Row ``t`` holds the minibatch indices for step ``t``; ``out[t]`` receives
    theta after that step.
    """
    cdef Py_ssize_t steps = idx.shape[0], batch = idx.shape[1]
    cdef Py_ssize_t t, j
    cdef double acc
    if out.shape[0] < steps:
        raise ValueError("output buffer shorter than index array")
    for t in range(steps):
        acc = 0.0
        for j in range(batch):
            acc += centers[idx[t, j]]
        theta = theta - eta * (theta - acc / batch)
        out[t] = theta
    return theta
