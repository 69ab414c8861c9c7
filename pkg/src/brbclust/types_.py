from typing import Literal, TypeAlias

import numpy as np
import numpy.typing as npt

DenseMatrix: TypeAlias = npt.NDArray[np.float64]  # 2-d, row-major, float64
Vector: TypeAlias = npt.NDArray[np.float64]
Labels: TypeAlias = npt.NDArray[np.int64]
Algorithm = Literal['DEC', 'IDEC', 'DCN']
Variant = Literal['brb', 'reset_only', 'recluster_only', 'disentangled', 'noise', 'off']
ReclusterAlgorithm = Literal['kmeans', 'kmeans_pp_init', 'kmedoids', 'em']  # em is reserved
Activation = Literal['relu', 'identity']
ZMode = Literal['per_feature', 'global', 'per_channel']
log_level = Literal['CRITICAL', 'ERROR', 'WARNING', 'INFO', 'DEBUG', 'NOTSET']  # logging level
