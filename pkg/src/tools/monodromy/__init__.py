"""
Monodromy Tool
Integer monodromy, cocycles and relative monodromy lattices.
"""
