"""Numerical services for fractex."""

from fractex.services.dataset import load_dataset, make_synthetic_dataset
from fractex.services.fbm_synthesis import synth_fbm, synth_fbm_1d, synth_fbm_nd
from fractex.services.fractal import estimate_hurst, fd_map, fractal_dimension, pooled_hurst
from fractex.services.metrics import dice, hd95, nmse, region_report, summarize
from fractex.services.preprocessing import crop_volume, normalize_volume
from fractex.services.segnet import backward, forward, init_params, loss, predict, shape_audit
from fractex.services.trainer import SegmentationTrainer, train, train_ensemble
from fractex.services.uncertainty import ensemble_predict, mc_dropout_predict, tta_predict
from fractex.services.wavelet import dwt_forward, dwt_inverse, scatter, scattering_moment

__all__ = [
    "SegmentationTrainer",
    "backward",
    "crop_volume",
    "dice",
    "dwt_forward",
    "dwt_inverse",
    "ensemble_predict",
    "estimate_hurst",
    "fd_map",
    "forward",
    "fractal_dimension",
    "hd95",
    "init_params",
    "load_dataset",
    "loss",
    "make_synthetic_dataset",
    "mc_dropout_predict",
    "nmse",
    "normalize_volume",
    "pooled_hurst",
    "predict",
    "region_report",
    "scatter",
    "scattering_moment",
    "shape_audit",
    "summarize",
    "synth_fbm",
    "synth_fbm_1d",
    "synth_fbm_nd",
    "train",
    "train_ensemble",
    "tta_predict",
]
