"""
Closed-form numerics of the stochastic-solid renderer.

Every function here is pure and works on numpy arrays batched over rays;
the single-ray operations wrap the batched kernels.
"""
