"""Evolution strategies with importance mixing.

Submodules: ``gaussian`` (search distributions), ``mixing`` (sample reuse),
``strategies`` (OpenES, SNES, CEM, CMA-ES), ``envs`` (CartPole / Acrobot
benchmarks and the MLP policy), ``stats`` and ``verify`` (statistical
checks), ``experiment`` and ``cli`` (driver and command line).
"""

from .gaussian import (Diagonal, FullCholesky, GaussianPdf, Isotropic, log_density,
                       log_density_ratio, sample)
from .mixing import (Archive, Generation, MixOutcome, mix, mix_extended, mix_sun_variant,
                     rule1_accept, rule2_accept)
from .strategies import CEM, CMAES, SNES, OpenES, make_strategy, rank_transform

__version__ = "0.1.0"

__all__ = [
    "Isotropic", "Diagonal", "FullCholesky", "GaussianPdf", "log_density", "log_density_ratio",
    "sample", "Archive", "Generation", "MixOutcome", "mix", "mix_extended", "mix_sun_variant",
    "rule1_accept", "rule2_accept", "OpenES", "SNES", "CEM", "CMAES", "make_strategy",
    "rank_transform",
]
