# fmt: off
name = 'mtlfno'
version = '0.1.0'
description = 'Multi-task Fourier neural operator with polar/Cayley spectral weights for sparse-sensor field reconstruction.'
requires_python = '>=3.12'
authors = [('Gabliz', 'gabliz.dev@gmail.com')]
# fmt: on
