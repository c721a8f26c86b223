"""Discretized weighted block spaces: weights, maximal functions, block and
molecule decompositions, Morrey duality, and operator-bound experiments."""

__version__ = "0.1.0"

from .grid import Cube, CubeFamily, DomainError, GridFunction, GridSpec, load_function, save_function
from .weights import Weight, WeightReport, parse_weight, power_weight
from .maximal import hl_maximal, lpw_norm, smooth_maximal
from .blocks import Block, BlockDecomposition, decompose_ml, make_block, reconstruct
from .molecules import Molecule, molecule_R, molecule_to_blocks
from .morrey import duality_pairing_check, morrey_norm
from .operators import make_operator
from .verify import BoundReport, ExperimentConfig

__all__ = [
    "Block", "BlockDecomposition", "BoundReport", "Cube", "CubeFamily", "DomainError",
    "ExperimentConfig", "GridFunction", "GridSpec", "Molecule", "Weight", "WeightReport",
    "decompose_ml", "duality_pairing_check", "hl_maximal", "load_function", "lpw_norm",
    "make_block", "make_operator", "molecule_R", "molecule_to_blocks", "morrey_norm",
    "parse_weight", "power_weight", "reconstruct", "save_function", "smooth_maximal",
]
