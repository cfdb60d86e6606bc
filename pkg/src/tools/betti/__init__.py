"""
Betti Tool
Betti coordinates, grids and torsion detection.
"""
