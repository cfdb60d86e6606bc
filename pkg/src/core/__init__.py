"""
Core module: families, paths, numerics, elliptic arithmetic and errors.
"""
