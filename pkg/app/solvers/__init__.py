# Riccati reference solvers
