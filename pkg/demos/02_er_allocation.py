"""Erdos-Renyi density allocation across layers.

A single global density is distributed so that each layer gets
d_l proportional to (n_in + n_out) / (n_in * n_out): bigger layers end up
sparser. Small layers can saturate at density 1; they are frozen dense and
the remaining budget is re-solved.
"""

from sparsemlp import er_densities

CHAIN = [3072, 1024, 512, 10]

print(f"layer chain: {CHAIN}\n")
print(f"{'global d':>9} | {'layer densities':^34} | {'layer nnz':^26} | total params")
print("-" * 95)
for density in [1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001]:
    plan = er_densities(CHAIN, density)
    dens = ", ".join(f"{d:.4f}" for d in plan.layer_densities)
    nnz = ", ".join(f"{n:>7}" for n in plan.layer_nnz)
    total = plan.total_nnz + sum(CHAIN[1:])  # biases stay dense
    print(f"{density:>9} | [{dens}] | [{nnz}] | {total:>9,}")

print()
plan = er_densities(CHAIN, 0.01)
print("at global density 0.01 the solved layer densities are "
      f"[{plan.layer_densities[0]:.3f}, {plan.layer_densities[1]:.3f}, {plan.layer_densities[2]:.1f}]")
print("at global density 0.001 the model is down to "
      f"{er_densities(CHAIN, 0.001).total_nnz + sum(CHAIN[1:]):,} parameters "
      "(from 3,676,682 dense)")
