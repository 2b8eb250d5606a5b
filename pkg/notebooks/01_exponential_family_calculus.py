"""
A tour of the exponential-family calculus
=========================================

Every distribution in the package is handled through one interface: natural
parameters, sufficient statistics, a log-partition function A, and a base
measure h. Two identities carry all the heavy lifting downstream:

* the gradient of A equals the expected sufficient statistics, and
* the "pseudo" entropy  -eta.A'(eta) + A(eta)  equals the ordinary entropy
  plus E[log h(x)], so it is closed-form even when the entropy is not.
"""

import numpy as np

from efgen import families as fam

# A gamma distribution with shape 2 and rate 3, moved into natural form.
gamma = fam.gamma_family()
standard = np.array([2.0, 3.0])
natural = fam.to_natural(gamma, standard)
print("gamma standard (shape, rate):", standard)
print("gamma natural params:        ", natural)
print("round trip:                  ", fam.from_natural(gamma, natural))

# The log-partition gradient is the mean of T(x) = (ln x, x).
grad = fam.grad_log_partition(gamma, natural)
rng = np.random.default_rng(0)
draws = fam.sample(gamma, standard, rng, 200_000)
print("\nA'(natural)            :", grad)
print("empirical E[(ln x, x)] :", [np.log(draws).mean(), draws.mean()])

# For unit-base-measure families the pseudo entropy IS the entropy.
print("\ngamma entropy        :", fam.entropy(gamma, standard))
print("gamma pseudo entropy :", fam.pseudo_entropy(gamma, natural))

# The Poisson family is the interesting one: h(x) = prod 1/x_d! is not
# constant, the entropy needs a truncated series, but the pseudo entropy
# collapses to sum lambda_d (1 - log lambda_d).
poisson = fam.poisson_product(2)
rates = np.array([1.0, 4.0])
nat = fam.to_natural(poisson, rates)
print("\npoisson entropy (truncated series):", fam.entropy(poisson, rates))
print("poisson pseudo entropy (closed)   :", fam.pseudo_entropy(poisson, nat))
print("closed form  sum lam(1 - log lam) :", np.sum(rates * (1 - np.log(rates))))

# The two entropies differ by exactly E[log h(x)].
gap = fam.pseudo_entropy(poisson, nat) - fam.entropy(poisson, rates)
print("pseudo - standard                 :", gap)
print("E[log h(x)] by truncated series   :", fam.expected_log_base_measure(poisson, rates))
