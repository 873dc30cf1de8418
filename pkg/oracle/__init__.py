"""
Brute-force references for the closed forms in `core`.

Nothing here imports `core`; every formula is re-derived locally so a shared
bug cannot hide itself.
"""
