"""
MTL-FNO Controller Package.

Orchestration of the network forward pass, training, evaluation and run
directories on top of the core numerics and the data models.
"""
