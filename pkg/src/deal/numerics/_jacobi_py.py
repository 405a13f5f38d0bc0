"""Pure-Python one-sided Jacobi sweeps (fallback for the compiled kernel).

Same contract as ``_jacobi.pyx``; rows of ``gt`` are the columns being
orthogonalized.
"""
import math

import numpy as np


def jacobi_sweeps(gt: np.ndarray, vt: np.ndarray, tol: float, max_sweeps: int, floor: float = 0.0) -> int:
    n = gt.shape[0]
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                gp = gt[p].copy()
                gq = gt[q].copy()
                alpha = float(gp @ gp)
                beta = float(gq @ gq)
                gamma = float(gp @ gq)
                if gamma == 0.0 or alpha <= floor or beta <= floor or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                elif zeta >= 0.0:
                    t = 1.0 / (zeta + math.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                gt[p] = c * gp - s * gq
                gt[q] = s * gp + c * gq
                vp = vt[p].copy()
                vq = vt[q].copy()
                vt[p] = c * vp - s * vq
                vt[q] = s * vp + c * vq
        if not rotated:
            return sweep
    return -1
