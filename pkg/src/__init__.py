"""
relmon - Relative Monodromy Lab
Periods, abelian logarithms, Betti coordinates and monodromy data for
elliptic schemes and their fibre products over punctured curves.

Copyright (c) 2024. All rights reserved.
"""

__version__ = "1.0.0"
__author__ = "relmon developers"
__license__ = "MIT"
