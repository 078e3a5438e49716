"""
Utility modules for the HE-GD solver: ring arithmetic, CKKS, encrypted linear algebra and solvers
"""
