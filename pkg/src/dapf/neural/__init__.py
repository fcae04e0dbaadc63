"""From-scratch stacked LSTM with a Gaussian (mean, std) head."""

from .adam import AdamState, adam_step
from .checkpoint import load_model, model_from_dict, model_to_dict, save_model
from .lstm import (
    ForwardCache,
    LstmConfig,
    LstmLayer,
    LstmModel,
    backward,
    forward_batch,
    init_model,
    lstm_forward,
    nll_loss,
    zero_model,
)
from .training import (
    ForecastDistribution,
    TrainingLog,
    evaluate_nll,
    fold_seed,
    predict,
    predict_windows,
    train_fold,
)
