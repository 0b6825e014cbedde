"""Privacy-preserving federated learning simulator for enterprises with mixed data types."""

from .attacks import AttackConfig, GmlReport, gml_attack, poison_data, poison_model
from .clustering import affinity_propagation, cluster_fedavg, cosine_similarity
from .compression import Bitstream, Codebook, ahc_decode, ahc_encode, choose_k, kmedoids
from .config import RunConfig, load_config
from .defense import FilterThresholds, angle_filter, select_enterprises, strike_update
from .errors import (ContractError, DecodeError, KeyMismatchError, LedgerError,
                     PlaintextOverflowError, ScaleMismatchError)
from .he import CiphertextVector, KeyPair, aggregate_encrypted, dec, enc, keygen
from .ledger import Block, Chain, Miner, append_block, select_leader, verify_chain
from .model import ARCHITECTURES, Architecture, Hyperparams, LocalDataset
from .orchestrator import RoundMetrics, check_theorems, run_experiment, run_round

__version__ = "0.1.0"
