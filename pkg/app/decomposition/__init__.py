# Decomposition engines
