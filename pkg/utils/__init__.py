"""
Utilities package for SolidSplat
"""
