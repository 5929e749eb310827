"""Security workbench for perceptual image hashes.

Subpackages cover the deployable hashes (:mod:`phashbench.hash_core`), image
handling and edits (:mod:`phashbench.image_ops`), blackbox hash evasion
(:mod:`phashbench.evasion`), a bit-flip defense (:mod:`phashbench.defense`),
hash inversion (:mod:`phashbench.inversion`), the evaluation harness
(:mod:`phashbench.harness`), and the command line (:mod:`phashbench.cli`).
"""

__version__ = "0.1.0"
