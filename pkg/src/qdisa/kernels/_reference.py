"""Pure-numpy kernel backend.

Operation order matters: the compiled backend performs, per element, the
sums and divisions in exactly the order written here (left-to-right, no
fused multiply-add), which is what makes the two backends bit-identical.
Change one and you must change the other.
"""

from __future__ import annotations

import numpy as np


def triplet_sum(probes, centers, hwhm, hyperfine, out):
    d = probes[:, None] - centers[None, :]
    a2 = hwhm * hwhm
    dm = d - hyperfine
    dp = d + hyperfine
    np.divide(a2, a2 + d * d, out=out)
    out += a2 / (a2 + dm * dm)
    out += a2 / (a2 + dp * dp)
    return out
