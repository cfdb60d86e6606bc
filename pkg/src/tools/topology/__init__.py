"""
Topology Tool
Loops, words and covers of the punctured lambda-line.
"""
