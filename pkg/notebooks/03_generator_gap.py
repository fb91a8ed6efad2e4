# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # How fast does the hopping generator approach the birth-death generator?
#
# For F = exp <f, .> with f = -1 on [0, 1], both generators can be applied to a
# configuration by deterministic quadrature. We average |L_eps F - L_0 F|^2 over
# Gibbs samples and divide by E |L_0 F|^2. The ratio shrinks roughly linearly
# in eps, and on a finite ring it levels off at a floor set by the difference
# between the empirical density of a sample and its mean.

# %%
from contiflow import harness as H
from contiflow.config_space import StepFunction, Torus, Window
from contiflow.potentials import GaussianKernel, SquareWell

phi, z = SquareWell(1.0, 0.5), 0.2
f = StepFunction(Window((0.0,), (1.0,)), -1.0)
eps_list = (1.0, 0.5, 0.25, 0.125)

for L in (20.0, 60.0):
    bank = H.gibbs_bank(phi, z, Torus(1, L), 300, seed=5, chains=4)
    c = H.constants_from_samples(bank, phi, z, 0.0, 0.0, 5)
    r = H.pipeline_generator_gap(bank, phi, z, 0.0, 0.0, GaussianKernel(1.0), eps_list, f,
                            c["C_u"].value, c["C_v"].value)
    print(f"L = {L:g}")
    for eps in eps_list:
        print(f"  eps {eps:6.3f}  gap^2 / E|L0 F|^2 = {r.ratio[eps]}")

# %% [markdown]
# Compare with the 0.01 threshold used by the acceptance suite: at eps = 1/8 the
# ratio sits several times above it on either ring, which is why that criterion
# is reported as failing rather than tuned.
