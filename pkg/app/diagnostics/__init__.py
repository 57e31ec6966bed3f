# Numerical oracles
