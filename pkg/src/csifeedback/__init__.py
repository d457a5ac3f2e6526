"""Compressed CSI feedback for spatially correlated massive MIMO.

Channel synthesis, KLT / 2D-DCT sparsification, random-projection and
truncation compression, OMP and modified-OMP reconstruction, LBG / RVQ
quantization and MMSE-precoded sum rate.
"""

from .bases import Basis, dct2d_basis, densify, klt_basis, sparsify
from .channel_model import (
    CorrelationSpec, KroneckerChannel, Ula, Upa, UpaGeometry, estimate_covariance,
    one_ring_correlation, tx_correlation,
)
from .compression import compress_random_projection, compress_truncation, draw_measurement_matrix
from .precoding import PrecoderConfig, mmse_precoder, normalized_mse, sum_rate
from .quantization import Codebook, mqe, quantize, dequantize, rvq_codebook, train_lbg
from .reconstruction import modified_omp, omp, reconstruct_truncation

__version__ = "0.1.0"
