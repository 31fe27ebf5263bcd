"""Robust secure beamforming for an IRS-assisted mmWave cognitive radio downlink.

The package jointly optimizes the transmit beamformer of a cognitive base
station and the reflect phases of an intelligent reflecting surface to
maximize the worst-case achievable secrecy rate of the secondary user under
angle-of-departure uncertainty for the eavesdropper channels, subject to a
transmit power budget and the interference-temperature cap of the primary
user.
"""

__version__ = "0.1.0"

from irsec.optimizer import SchemeResult, alternate, asr, snr, worst_case_asr
from irsec.scenario import ScenarioConfig, build_trial, reference_scenario

__all__ = [
    "ScenarioConfig",
    "SchemeResult",
    "__version__",
    "alternate",
    "asr",
    "build_trial",
    "reference_scenario",
    "snr",
    "worst_case_asr",
]
