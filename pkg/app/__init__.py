"""
fiedwalk - Fiedler vectors from interacting random walks.

Two groups of walkers move on a graph and annihilate-and-respawn on contact;
the time-averaged difference of their densities estimates the Fiedler
vector of the graph Laplacian.
"""

__version__ = "0.1.0"
