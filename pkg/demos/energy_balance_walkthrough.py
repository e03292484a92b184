"""Walk through one gluing from Weyl data to the sign of the energy balance.

Run with ``python3 demos/energy_balance_walkthrough.py``. Takes a little under twenty seconds.
"""

import math
import warnings

from weylglue import energy_balance as eb
from weylglue import series_correction as sc
from weylglue import sphere_quadrature as sq
from weylglue import tensor_core as tc

T = 1.05


def main():
    w = tc.WeylData.from_eigenvalues([2.0, -0.5, -1.5], [1.0, 0.3, -1.3])
    print(f"|W|^2 = {w.norm_sq:.4f}")

    # Rotate so the self-dual and anti-self-dual eigenvalues pair up in the best order.
    verdict = eb.interaction_sign(w, t=T)
    print(f"best eigenvalue pairing sum {verdict.eigen_sum:.4f}, predicted sign {verdict.sign.value}")
    aligned = w.rotated(verdict.frame)

    jet = sc.correction_jet_cylinder(aligned, sc.CylinderParams(T))
    print(f"C2({T}) = {jet.c2:.6g} (asymptote {sc.c2_asymptotic(T):.6g})")
    print(f"W . hessian(A) = {sc.interaction_contraction(aligned, jet):.6g}")

    gap = sq.c2_minus_c1(aligned)
    print(f"C2 - C1 = {gap.boundary:.6f}, closed form (pi^2/4)|W|^2 = {math.pi**2 / 4 * aligned.norm_sq:.6f}")

    cfg = eb.GluingConfig(a=1e-4, gamma=5e-3)
    report = eb.energy_balance(aligned, jet, cfg)
    print(f"gamma^-4 cancellation residual {report.leading_cancellation:.2e}")
    print(f"predicted balance {report.predicted_balance:.6e}, assembled {report.assembled:.6e}")
    for line in report.error_budget:
        print(f"  budget {line.name:<22} {line.kind:<12} {line.value:.2e}")
    print(f"sign of the balance: {report.sign.value}")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        short, long = (eb.capacity_cutoff(1.0, math.exp(-big_l)).energy for big_l in (6.9, 13.8))
    print(f"capacity cutoff energy ratio when log(delta/delta~) doubles: {short / long:.4f}")


if __name__ == "__main__":
    main()
