"""
Engines: fundamental-group topology, period transport, integer monodromy and Betti maps.
"""
