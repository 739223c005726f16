"""Independent numerical oracles used by the tests.

These deliberately avoid the package's own machinery: the transverse mode
coefficient comes from a dense 1D finite-difference solve, and areas come
from brute-force pixel counting, so the quantities they produce can anchor
the package's values without circularity.
"""

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def transverse_mode_coefficient_fd(a: float, k: int = 1, n: int = 40000) -> float:
    """Solve -W'' + (k pi)^2 W = delta_a on (0,1) with Neumann ends; return W(a).

    Cell-centered second-order scheme with the point source deposited as a
    two-cell hat; dense enough that the value is good to ~1e-4.
    """
    h = 1.0 / n
    x = (np.arange(n) + 0.5) * h
    main = np.full(n, 2.0 / h**2 + (k * math.pi) ** 2)
    main[0] -= 1.0 / h**2
    main[-1] -= 1.0 / h**2
    off = -np.ones(n - 1) / h**2
    A = sp.diags([main, off, off], [0, -1, 1], format="csc")
    b = np.zeros(n)
    j = int(np.clip(math.floor(a / h - 0.5), 0, n - 2))
    t = (a - (j + 0.5) * h) / h
    b[j] += (1.0 - t) / h
    b[j + 1] += t / h
    W = spla.spsolve(A, b)
    return float(np.interp(a, x, W))


def pixel_area(inside, n: int = 1024, Lx: float = 1.0, Ly: float = 1.0) -> float:
    """Brute-force area of ``{inside(x, y)}`` by counting cell centers."""
    x = (np.arange(n) + 0.5) * (Lx / n)
    y = (np.arange(n) + 0.5) * (Ly / n)
    X, Y = np.meshgrid(x, y, indexing="ij")
    return float(inside(X, Y).sum()) * (Lx / n) * (Ly / n)


def pixel_symmetric_difference(inside_a, inside_b, n: int = 1024) -> float:
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    return float(np.logical_xor(inside_a(X, Y), inside_b(X, Y)).sum()) / n**2
