from .errors import FShapeError, NumericError, ValidationError
from .mesh import TriangleMesh, grid_mesh, icosphere, total_area, unit_square_grid
from .fem import SignalP0, SignalP1, make_signal
from .varifold import DiscreteVarifold, KernelParams, from_fshape, squared_distance
from .surface import CylinderPatch, MongePatch, SphereCap, builtin_surface
from .energy_model import DescentConfig, EnergyModel
from .file_io import FShapeFile, load_fshape, read_file, save_csv, save_fshape, write_file

__all__ = [
    'FShapeError',
    'ValidationError',
    'NumericError',
    'TriangleMesh',
    'grid_mesh',
    'icosphere',
    'total_area',
    'unit_square_grid',
    'SignalP0',
    'SignalP1',
    'make_signal',
    'DiscreteVarifold',
    'KernelParams',
    'from_fshape',
    'squared_distance',
    'SphereCap',
    'CylinderPatch',
    'MongePatch',
    'builtin_surface',
    'DescentConfig',
    'EnergyModel',
    'FShapeFile',
    'load_fshape',
    'save_fshape',
    'save_csv',
    'read_file',
    'write_file',
]
