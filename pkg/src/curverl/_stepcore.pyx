# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the training step.

The arithmetic mirrors the numpy fallback in curverl.kernels operation for
operation (same IEEE-754 ops in the same order), so the two backends produce
bitwise-identical results. Randomness is drawn by the caller.
"""


def sample_responses(const double[:, ::1] cum, const double[:, ::1] uniforms,
                     long long[:, ::1] out):
    """Inverse-CDF categorical sampling: out[b, i] = #{j : u >= cum[b, j]},
    capped at M - 1."""
    cdef Py_ssize_t n_prompts = cum.shape[0]
    cdef Py_ssize_t m = cum.shape[1]
    cdef Py_ssize_t n = uniforms.shape[1]
    cdef Py_ssize_t b, i, j
    cdef double u
    for b in range(n_prompts):
        for i in range(n):
            u = uniforms[b, i]
            j = 0
            while j < m - 1 and u >= cum[b, j]:
                j += 1
            out[b, i] = j


def accumulate_gradients(const double[:, ::1] probs, const long long[:, ::1] responses,
                         const double[:, ::1] coeff, double[:, ::1] out):
    """out[b] += sum_i coeff[b, i] * (onehot(responses[b, i]) - probs[b]).

    Written as (-c) * probs followed by += c at the response index, matching
    the fallback's elementwise operation order exactly.
    """
    cdef Py_ssize_t n_prompts = probs.shape[0]
    cdef Py_ssize_t m = probs.shape[1]
    cdef Py_ssize_t n = responses.shape[1]
    cdef Py_ssize_t b, i, j
    cdef double c, negc
    for b in range(n_prompts):
        for i in range(n):
            c = coeff[b, i]
            negc = -c
            for j in range(m):
                out[b, j] += negc * probs[b, j]
            out[b, responses[b, i]] += c
