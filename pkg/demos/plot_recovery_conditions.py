"""
Which atoms will the non-negative lasso pick?
=============================================

A tiny three-atom library in three bands. The observation is an exact
mixture of the first two atoms plus a small distortion. We compute the
recovery metrics for that support and compare what they predict with the
solver's actual output.
"""

import numpy as np

from nnsparse import GroundTruth, Problem, evaluate_conditions, solve_nlasso

# Two "pure" spectra and a third that leans towards both of them.
a0 = np.array([1.0, 0.0, 0.0])
a1 = np.array([0.0, 1.0, 0.0])
a2 = np.array([0.5, 0.5, np.sqrt(0.5)])
A = np.column_stack([a0, a1, a2])

x_true = np.array([0.8, 0.5, 0.0])
e = np.array([0.0, 0.0, -0.02])  # pushes away from the third atom
y = A @ x_true + e

###############################################################################
# The positive subset coherence of the outside atom is 1 - (0.5 + 0.5) = 0,
# and the ERC is 0 as well. PERC-Max still passes because the residual
# correlates negatively with the outside atom; PERC-AMax takes the absolute
# value and fails, and so does the ERC-based test.
p = Problem(A, y, gamma=0.05)
rep = evaluate_conditions(p, [0, 1], GroundTruth(x_true, e))
print("ERC  =", round(rep.erc, 6), "   PERC =", round(rep.perc, 6))
for name in ("mcc", "nscc", "apmrc", "perc_max", "perc_amax", "erc_mrc"):
    print(f"{name:>10}: {rep.verdicts[name]}")

###############################################################################
# The solver agrees with the APMRC verdict.
sol = solve_nlasso(p)
print("solver support:", sol.support.tolist(), " x =", np.round(sol.x, 4))

###############################################################################
# Flip the distortion towards the third atom and the NSCC margin turns
# negative: the residual now correlates with a2 more than gamma * PSC allows.
y_bad = A @ x_true - e
rep_bad = evaluate_conditions(Problem(A, y_bad, 0.05), [0, 1])
print("NSCC margin for atom 2:", rep_bad.nscc_margins[2])
print("solver support:", solve_nlasso(Problem(A, y_bad, 0.05)).support.tolist())
