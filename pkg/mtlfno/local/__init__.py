"""
MTL-FNO Local Package.

Readers and writers for everything that lives on disk: the synthetic
generator, the ``MTLD`` dataset directories, external grid files and
``MTLF`` checkpoints.
"""
