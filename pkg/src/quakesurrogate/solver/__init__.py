from .dynamics import (DEFAULT_SDOF, BilinearState, SDOFParams, ShearBuildingParams,
                       bilinear_force, building_rayleigh, default_building, eigen_analysis,
                       newmark_mdof, newmark_sdof, rayleigh_coefficients, sdof_equivalent,
                       top_floor_displacement, tune_building)
from .kernels import BACKEND_NAME

__all__ = [
    "DEFAULT_SDOF", "BilinearState", "SDOFParams", "ShearBuildingParams", "bilinear_force",
    "building_rayleigh", "default_building", "eigen_analysis", "newmark_mdof",
    "newmark_sdof", "rayleigh_coefficients", "sdof_equivalent", "top_floor_displacement",
    "tune_building", "BACKEND_NAME",
]
