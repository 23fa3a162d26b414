"""Detect modern Bitcoin mixing-service chains in a transaction ledger."""

from .chain import ChainParams, ChainRecord, build_chain, chain_time_median, extend_backward, extend_forward
from .cluster import ClusterSet, build_clusters, propagate_labels
from .detector import (AddressLabel, DetectionReport, Label, RejectReason, Source, accept_chain,
                       label_chain, run_detection, trace_dirty)
from .ledger import AddrType, Block, Ledger, Outpoint, Transaction, TxOutput, ingest, parse_block_line
from .mixsim import GroundTruth, SimScenario, generate
from .patterns import CandidateVerdict, Condition, PatternParams, classify_candidate, is_sweeper, scan_block

__version__ = "0.1.0"
