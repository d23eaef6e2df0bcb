"""Grid refinement of the discrete geometric identities.

For a few radial graphs, prints the defect of each identity on a sequence of
grids and the fitted convergence order. A round sphere satisfies all of them
to rounding error.

    python3 demos/refinement_study.py
"""

from curvatura.verify import check_codazzi, check_gauss, check_lemma1

GRIDS = [(8, 16), (16, 32), (32, 64), (64, 128)]
GRAPHS = ["1.3", "1 + 0.1*z", "1 + 0.1*x", "1 + 0.05*x*y + 0.03*z^3"]


def show(rep):
    defects = "  ".join(f"{r:9.2e}" for r in rep.residuals)
    order = "exact" if rep.exact else f"{rep.order:5.2f}"
    print(f"  {rep.name:<22} {defects}   order {order}")


for zdef in GRAPHS:
    print(f"z = {zdef}")
    for rep in (*check_lemma1(zdef, GRIDS), check_codazzi(zdef, GRIDS), check_gauss(zdef, GRIDS)):
        show(rep)
    print()
