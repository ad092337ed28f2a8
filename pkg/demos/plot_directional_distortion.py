"""
Tolerable and intolerable distortion
====================================

A distortion orthogonal to the support atoms is harmless if it forms an
obtuse angle with the outside atom, whatever its size. Pointing the same
distortion the other way breaks recovery as soon as its correlation with the
outside atom exceeds gamma times the positive subset coherence.
"""

import numpy as np

from nnsparse import DistortionSpec, InstanceSpec, Problem, build_cache, generate, psc, solve_nlasso


def instance(beta, sign):
    return generate(InstanceSpec(
        L=30, N=4, J=3, coherence_target=0.5, seed=2,
        distortion=DistortionSpec.parse(f"directional:j=3,beta={beta!r},sign={sign}"),
    ))


base = instance(0.0, "+")
S = base.support
cache = build_cache(base.dictionary, S)
s = psc(cache, base.dictionary[:, 3])
r = np.linalg.norm(cache.residual(base.dictionary[:, 3]))
gamma = 0.05
beta_star = gamma * s / r
print(f"PSC of the outside atom: {s:.4f}; predicted breaking magnitude: {beta_star:.4f}")

###############################################################################
for sign in "-+":
    print(f"sign {sign}")
    for beta in (0.1 * beta_star, 0.9 * beta_star, 1.1 * beta_star, 10 * beta_star, 100 * beta_star):
        inst = instance(float(beta), sign)
        sol = solve_nlasso(Problem(inst.dictionary, inst.observation, gamma))
        ok = np.array_equal(sol.support, S)
        print(f"  beta = {beta:8.4f}  recovered: {ok}")
