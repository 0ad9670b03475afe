"""
Transition probabilities of the dual death process
==================================================

The filter's prediction step moves mass down a pure death process. This demo
compares the closed-form transition table with the matrix exponential of the
process generator, then shows the binomial shortcut available for CIR.
"""

from dualfilter import CIRModel, WFModel, transition_table
from dualfilter.oracle import generator_expm

wf = WFModel(alpha=(0.5, 1.0, 1.5))
spec = wf.death_kernel_spec()
origin = (3, 1, 2)
closed = transition_table(origin, 0.4, None, spec).probs
numeric = generator_expm(origin, 0.4, None, spec).probs
print(f"{'target':>10} {'closed form':>14} {'expm':>14}")
for target in sorted(closed, key=sum, reverse=True)[:10]:
    print(f"{str(target):>10} {closed[target]:14.10f} {numeric[target]:14.10f}")
print("largest gap:", max(abs(closed[n] - numeric[n]) for n in closed))

# For CIR the total simply thins binomially along the dual flow.
cir = CIRModel(delta=3.0, gamma=0.5, sigma2=0.5, lambda_em=2.0)
table = transition_table((6,), 0.3, 2.0, cir.death_kernel_spec()).probs
for n in range(6, -1, -1):
    print(f"6 -> {n}: {table[(n,)]:.12f}  binomial {cir.binomial_transition(6, 6 - n, 0.3, 2.0):.12f}")
