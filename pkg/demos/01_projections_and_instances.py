"""Problem instances and exact projections.

Builds the three kinds of feasibility sets, projects points onto them, and
generates a random coupled-feasible instance.
"""

import numpy as np

from netalloc import LocalSet, ObjectiveSpec, grad, project, random_instance

# a strictly convex quadratic objective and its gradient
obj = ObjectiveSpec.quadratic(np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([-1.0, 0.3]))
x = np.array([0.4, -0.2])
print("objective value f(x) =", obj.value(x))
print("gradient grad f(x)   =", grad(obj, x))
print("gradient Lipschitz constant:", obj.lipschitz())

# box projection is a componentwise clamp
box = LocalSet.box([-1.0, -1.0], [1.0, 1.0])
print("\nbox projection of (2, 0.3):", project(box, np.array([2.0, 0.3])))

# polyhedra certify a strictly interior point at construction
R = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, -1.0]])
poly = LocalSet.polyhedron(R, np.array([1.5, 0.5, 0.5, 1.0]))
print("certified interior slack:", poly.interior_slack)
y = np.array([2.0, 2.0])
p = project(poly, y)
print("projection of", y, "->", p, "(violation", (R @ p - poly.l).max(), ")")

# a random 5-agent instance in dimension 2; the anchors make the coupled
# balance constraint satisfiable with strictly interior allocations
problem = random_instance(seed=3, n=5, m=2, set_kind="polyhedron")
print("\nrandom instance: n =", problem.n, " m =", problem.m)
print("total resource:", problem.resource_total())
X0 = problem.project_all(np.zeros((problem.n, problem.m)))
print("projected zero start feasible:", problem.membership_violations(X0).max() <= 1e-9)
