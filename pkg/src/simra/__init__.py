"""Behavioral DRAM simulator and TRNG built on simultaneous multiple-row activation."""

from .analog import AnalogParams, ChipConfig, ChipInstance
from .characterization import CampaignConfig, DataPattern, EntropyRecord, shannon_entropy
from .dram import DecoderModel, DramGeometry, SarGroup, TimingParams
from .engine import CommandEngine, LatencyCosts, LatencyLedger
from .presets import PRESETS, preset
from .sha256 import sha256_condition
from .trng import PerfModel, TrngOutput, TrngPlan, generate, latency, normalize_to_quac, plan, throughput, von_neumann

__version__ = "0.1.0"
