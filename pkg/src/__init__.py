"""
Multiview SBM Test - Source Package
===================================

Permutation tests of association between the latent communities of two
network views, or of a network and a node feature matrix, together with
the simulation designs used to calibrate them.
"""
