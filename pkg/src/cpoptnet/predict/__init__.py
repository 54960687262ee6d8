"""Latent-factor forecasting: datasets, predictor training and rolling forecasts."""

from cpoptnet.predict.adam import Adam
from cpoptnet.predict.dataset import SeriesDataset, build_dataset, latent_series
from cpoptnet.predict.model import (
    KINDS,
    Predictor,
    TrainConfig,
    load_model,
    predict_rolling,
    save_model,
    train,
)

__all__ = [
    "Adam",
    "KINDS",
    "Predictor",
    "SeriesDataset",
    "TrainConfig",
    "build_dataset",
    "latent_series",
    "load_model",
    "predict_rolling",
    "save_model",
    "train",
]
