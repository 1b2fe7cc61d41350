"""Noncoherent energy autoencoders for multicarrier SIMO links.

Single-user NC-EA (:mod:`ncea.nc_ea`), multiuser NC-EAMA (:mod:`ncea.nc_eama`),
index-modulation and PAM baselines (:mod:`ncea.baselines`) and the Monte Carlo
harness (:mod:`ncea.experiment`, :mod:`ncea.cli`).
"""

from .baselines import PamScheme, build_im_codebook, build_pam_med, im_detect, oma_im, oma_pam, pam_detect_per_subcarrier
from .channel import SnrSpec, snr_to_powers
from .montecarlo import evaluate_bler, evaluate_multiuser_bler
from .nc_ea import TrainedModel, decode_dnn, decode_ml, encode_batch, extract_codebook, train_nc_ea
from .nc_eama import DownlinkSystem, UplinkSystem, train_eama
from .training import TrainConfig

__version__ = "0.1.0"
