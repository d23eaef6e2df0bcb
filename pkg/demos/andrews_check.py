"""Second derivative of f(eig B) three ways, at a point with a double eigenvalue.

Compares the closed-form contraction (with its coalescing limit) against
central differences of the spectral function and against the exact minor-sum
polynomial.
"""

import numpy as np

from curvatura import symfunc as sf
from curvatura.verify import andrews_exact, andrews_oracle

rng = np.random.default_rng(7)
for lam, k in [((2.0, 2.0, 0.5), 2), ((1.0, 1.0, 1.0), 3), ((3.0, 1.0, -0.2), 2), ((1.5, 1.5, 1.5, 0.3), 3)]:
    lam = np.array(lam)
    n = lam.size
    a = rng.standard_normal((n, n))
    eta = (a + a.T) / 2
    print(f"lambda {lam}, k={k}")
    print(f"  closed form   {sf.andrews_contract(lam, k, eta): .12f}")
    print(f"  differences   {andrews_oracle(lam, k, eta): .12f}")
    print(f"  minor sums    {andrews_exact(lam, k, eta): .12f}")
