"""Desk-scale aeroacoustic chain: transport surrogate, spectra, cavity Helmholtz solves."""
from .numkit import CsrMatrix, csr_from_triplets, spmv, dot_hermitian, norm2, axpy
from .fvschemes import Scheme, FaceStencil, TransportConfig, advect, face_value
from .spectra import TimeSeries, Spectrum, fft, ifft, psd, dominant_frequency
from .helmholtz import CavityGrid, HelmholtzProblem, build_grid, assemble, manufactured_problem
from .krylov import SolverOptions, SolveReport, bicgstab, bicgstab_l, tfqmr, jacobi
from .schwarz import Partition, TransmissionParams, partition, schwarz_solve, tune_parameters

__version__ = "0.1.0"

__all__ = [
    "CsrMatrix", "csr_from_triplets", "spmv", "dot_hermitian", "norm2", "axpy",
    "Scheme", "FaceStencil", "TransportConfig", "advect", "face_value",
    "TimeSeries", "Spectrum", "fft", "ifft", "psd", "dominant_frequency",
    "CavityGrid", "HelmholtzProblem", "build_grid", "assemble", "manufactured_problem",
    "SolverOptions", "SolveReport", "bicgstab", "bicgstab_l", "tfqmr", "jacobi",
    "Partition", "TransmissionParams", "partition", "schwarz_solve", "tune_parameters",
]
