"""Infomorphic neural networks: neurons trained by local goals built from a
partial information decomposition of their output given feedforward,
context and lateral inputs."""
from .lattice import (HEURISTIC_GOAL, OPTIMIZED_GOAL, OUTPUT_GOAL, Antichain, JointDistribution, PidLattice,
                      build_lattice, consistency_residuals, decompose, goal_value, goal_vector, isx_redundancy,
                      mutual_information)
from .estimator import BinningSpec, bin_values, estimate_joint
from .neuron import ActivationParams, Layer, NeuronState, activation, fire
from .network import Network, NetworkConfig, TrainReport, train
from .dataset import DatasetSplit, load_idx, load_mnist

__version__ = "0.1.0"
