"""
Transport Tool
Analytic continuation of periods and logarithms along loops.
"""
