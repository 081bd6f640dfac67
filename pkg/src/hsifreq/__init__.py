"""Snapshot compressive spectral imaging toolkit.

Simulation of coded-aperture snapshot acquisition, spectral correlation
analysis in space and frequency domains, a dual-domain transformer prior
trained inside a K-stage deep unfolding loop, a GAP-TV baseline, and the
surrounding metrics and file formats.
"""

from .base import BaseEstimator, NotFittedError
from .cassi import (SensingConfig, phi_adjoint, phi_forward, phi_phit_diag,
                    random_mask, shift, shift_back, simulate)
from .correlation import (CorrelationReport, TokenCorrelationCurve, correlation_maps,
                          corpus_stats, pearson, token_correlation)
from .dct import dct2_cube, idct2_cube
from .estimators import BandwiseDct, GapTvReconstructor, UnfoldingReconstructor
from .gaptv import GapTvConfig, gap_tv, tv_denoise
from .hsio import SceneSpec, export_heatmap, gen_scene, read_hsic, write_hsic
from .metrics import count_flops, count_params, evaluate, fdg, psnr, ssim
from .network import NetConfig
from .optim import Adam, cosine_lr
from .tensor import Param, Tape, Tensor
from .unfolding import (TrainConfig, UnfoldingNet, data_module, loss, reconstruct,
                        train)

__version__ = "0.1.0"

__all__ = [
    "Adam", "BandwiseDct", "BaseEstimator", "CorrelationReport", "GapTvConfig",
    "GapTvReconstructor", "NetConfig", "NotFittedError", "Param", "SceneSpec",
    "SensingConfig", "Tape", "Tensor", "TokenCorrelationCurve", "TrainConfig",
    "UnfoldingNet", "UnfoldingReconstructor", "correlation_maps", "corpus_stats",
    "cosine_lr", "count_flops", "count_params", "data_module", "dct2_cube",
    "evaluate", "export_heatmap", "fdg", "gap_tv", "gen_scene", "idct2_cube",
    "loss", "pearson", "phi_adjoint", "phi_forward", "phi_phit_diag", "psnr",
    "random_mask", "read_hsic", "reconstruct", "shift", "shift_back", "simulate",
    "ssim", "token_correlation", "train", "tv_denoise", "write_hsic",
]
