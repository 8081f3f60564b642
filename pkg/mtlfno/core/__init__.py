"""
MTL-FNO Core Package.

Numerical building blocks: the reverse-mode autodiff engine, complex
arithmetic on paired real nodes, differentiable spectral operations and the
construction of task-specific spectral weights.
"""
