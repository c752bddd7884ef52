# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Must stay operation-for-operation identical to the numpy reference
implementation (same order of adds/divides, no FMA -- the build disables
floating-point contraction) so that both backends produce bit-identical
output.
"""


def triplet_sum(
    double[::1] probes,
    double[::1] centers,
    double[::1] hwhm,
    double hyperfine,
    double[:, ::1] out,
):
    cdef Py_ssize_t nf = probes.shape[0]
    cdef Py_ssize_t np_ = centers.shape[0]
    cdef Py_ssize_t f, p
    cdef double d, dm, dp, a2, acc
    with nogil:
        for f in range(nf):
            for p in range(np_):
                d = probes[f] - centers[p]
                a2 = hwhm[p] * hwhm[p]
                dm = d - hyperfine
                dp = d + hyperfine
                acc = a2 / (a2 + d * d)
                acc = acc + a2 / (a2 + dm * dm)
                acc = acc + a2 / (a2 + dp * dp)
                out[f, p] = acc
    return out
