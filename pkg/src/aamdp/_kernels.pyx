# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_fallback``; same signatures and results."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def bellman_q(double[:, :, :, ::1] blocks, double[:, :, ::1] rewards, double[::1] v, double gamma):
    cdef Py_ssize_t S = blocks.shape[0], K = blocks.shape[1], A = blocks.shape[2], T = blocks.shape[3]
    cdef Py_ssize_t s, k, a, t
    cdef double acc
    out = np.empty((S, K, A))
    cdef double[:, :, ::1] q = out
    target_arr = np.empty((A, T))
    cdef double[:, ::1] target = target_arr
    with nogil:
        for s in range(S):
            for a in range(A):
                for t in range(T):
                    target[a, t] = rewards[s, a, t] + gamma * v[t]
            for k in range(K):
                for a in range(A):
                    acc = 0.0
                    for t in range(T):
                        acc = acc + blocks[s, k, a, t] * target[a, t]
                    q[s, k, a] = acc
    return out


def resampled_backward(double[:, :, ::1] p_pi, double[:, ::1] r_pi, cnp.intp_t[:, :, ::1] idx, double gamma):
    cdef Py_ssize_t n = idx.shape[0], H = idx.shape[1], S = idx.shape[2]
    cdef Py_ssize_t i, h, s, t, k
    cdef double acc
    out = np.zeros((n, S))
    cdef double[:, ::1] v = out
    buf_arr = np.zeros(S)
    cdef double[::1] nxt = buf_arr
    with nogil:
        for i in range(n):
            for s in range(S):
                v[i, s] = 0.0
            for h in range(H - 1, -1, -1):
                for s in range(S):
                    k = idx[i, h, s]
                    acc = 0.0
                    for t in range(S):
                        acc = acc + p_pi[s, k, t] * v[i, t]
                    nxt[s] = r_pi[s, k] + gamma * acc
                for s in range(S):
                    v[i, s] = nxt[s]
    return out
