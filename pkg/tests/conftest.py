import numpy as np
import pytest


def random_star_polygon(rng, n=None, scale=None):
    """CCW polygon star-shaped about its first-drawn centre, with bounded angular gaps.

    Returns (vertices, centre); the centre is a kernel point, usable as fan centre.
    """
    n = n or int(rng.integers(3, 9))
    gap = 2 * np.pi / n
    # jitter keeps every angular gap in (0.6, 1.4) * 2pi/n, below pi for n >= 3
    theta = gap * np.arange(n) + rng.uniform(-gap / 5, gap / 5, size=n)
    radius = rng.uniform(0.55, 1.0, size=n)
    h = scale if scale is not None else 10 ** rng.uniform(-2, 0)
    centre = rng.uniform(-1, 1, size=2)
    verts = centre + h * np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    return verts, centre


def monomial_integral_green(poly, a, b, npts=12):
    """Exact integral of x^a y^b over a CCW polygon via Green's theorem (independent oracle)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    t, w = 0.5 * (x + 1), 0.5 * w
    total = 0.0
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        pts = p + t[:, None] * (q - p)
        # int x^a y^b dA = oint x^(a+1) y^b / (a+1) dy
        total += np.sum(w * pts[:, 0] ** (a + 1) * pts[:, 1] ** b) / (a + 1) * (q[1] - p[1])
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
