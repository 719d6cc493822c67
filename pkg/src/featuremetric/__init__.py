"""Featuremetric benchmarking: circuit sampling by feature vector, stabilizer
simulation, capability estimation and Gaussian-process capability models."""

from .circuit import Circuit, ConnectivityGraph, Gate, Layer, compute_features, invert_layer
from .design import DesignPlan, FeatureAxis, FeatureSpace, grid_design, sobol_design
from .estimators import CapabilityRecord, build_srdfe_bundle, srdfe_fidelity
from .gp import GPModel, KernelParams, fit
from .monotonic import MonotonicGPModel, ep_fit, place_virtual_points
from .noise import NoiseModel, ingest_calibration, simulate_noisy_shots
from .sampling import sample_fixed_density_circuit, sample_mirror_circuit
from .stabilizer import PauliOperator, Tableau, conjugate_pauli, simulate_ideal_output

__version__ = "0.1.0"
