"""Attention-gated BiLSTM and boosted-tree ensemble for daily price series."""

from .bilstm import BiLstmNetwork, TrainConfig
from .config import PipelineConfig, load_config
from .dataio import ScalerParams, SeriesDataset, fit_scaler, make_windows, parse_csv, read_csv
from .ensemble import ReciprocalWeights, StackingModel, fit_stacking, reciprocal_weights, weighted_combine
from .errors import CabxdeError, ConfigError, DataError, NumericalError
from .gbdt import BoostedModel, GbdtConfig
from .metrics import mae, mape, rmse

__version__ = "0.1.0"
