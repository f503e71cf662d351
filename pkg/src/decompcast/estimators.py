"""scikit-learn compatible wrappers around the functional API."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .decomposition import DEFAULT_KERNEL, DEFAULT_MOE_KERNELS, DEFAULT_TOP_K, make_method
from .exceptions import ShapeError
from .models import ForecastModel, ModelConfig
from .training import TrainConfig, mse_loss, predict, train
from .validation import check_series


class SeriesDecomposer(TransformerMixin, BaseEstimator):
    """Stateless trend/seasonal splitter.

    ``transform`` maps ``(B, L, C)`` windows (or a single ``(L, C)`` window) to
    ``[..., :C]`` trend and ``[..., C:]`` seasonal along the last axis;
    ``inverse_transform`` adds the halves back together. A mixture-of-experts
    decomposer mixes its trends uniformly.
    """

    def __init__(self, method="ma", kernel=DEFAULT_KERNEL, kernels=DEFAULT_MOE_KERNELS,
                 top_k=DEFAULT_TOP_K):
        self.method = method
        self.kernel = kernel
        self.kernels = kernels
        self.top_k = top_k

    def fit(self, X, y=None):
        X = check_series(X)
        self.method_ = make_method(self.method, self.kernel, self.kernels, self.top_k)
        self.n_features_in_ = X.shape[2]
        return self

    def decompose(self, X):
        check_is_fitted(self, "method_")
        return self.method_.decompose(check_series(X))

    def transform(self, X):
        squeeze = np.ndim(X) == 2
        parts = self.decompose(X)
        out = np.concatenate([parts.trend, parts.seasonal], axis=-1)
        return out[0] if squeeze else out

    def inverse_transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        c = X.shape[-1] // 2
        return X[..., :c] + X[..., c:]


class DecompositionForecaster(BaseEstimator):
    """Trend/seasonal decomposition forecaster with fit/predict.

    Parameters
    ----------
    backbone : {"rmm", "rmsm", "linear"}
        Seasonal model: a three-layer MLP, the shift-MLP that also sees the
        raw window, or one linear map.
    decomposition : {"ma", "moe", "fd"}
        Moving average, mixture of moving averages, or top-k Fourier split.
    kernel, kernels, top_k, trainable_gate
        Parameters of the chosen decomposition.
    trend_hidden, rmm_hidden, shift_hidden
        Hidden widths of the trend MLP, the RMM backbone and the shift-MLP.
    lr, batch_size, max_epochs, patience
        Adam learning rate and the early-stopping loop settings.
    random_state : int
        Seeds parameter initialization and the per-epoch shuffling.

    ``fit`` takes windows ``X`` of shape ``(n, L, C)`` and targets ``y`` of
    shape ``(n, H, C)``; ``L``, ``H`` and ``C`` are read from them.
    """

    def __init__(self, backbone="rmm", decomposition="ma", kernel=DEFAULT_KERNEL,
                 kernels=DEFAULT_MOE_KERNELS, top_k=DEFAULT_TOP_K, trainable_gate=True,
                 trend_hidden=512, rmm_hidden=512, shift_hidden=(64, 128), lr=1e-4,
                 batch_size=32, max_epochs=10, patience=3, random_state=0):
        self.backbone = backbone
        self.decomposition = decomposition
        self.kernel = kernel
        self.kernels = kernels
        self.top_k = top_k
        self.trainable_gate = trainable_gate
        self.trend_hidden = trend_hidden
        self.rmm_hidden = rmm_hidden
        self.shift_hidden = shift_hidden
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state

    def _model_config(self, seq_len, horizon, channels):
        method = make_method(self.decomposition, self.kernel, self.kernels, self.top_k,
                             self.trainable_gate)
        return ModelConfig(seq_len, horizon, channels, self.backbone, method,
                           self.trend_hidden, self.rmm_hidden, tuple(self.shift_hidden))

    def fit(self, X, y, eval_set=None):
        """Train on ``(X, y)``; early stopping watches ``eval_set`` or, if absent, ``(X, y)``."""
        X = check_series(X, "X", allow_2d=False)
        y = check_series(y, "y", allow_2d=False)
        if len(X) != len(y) or X.shape[2] != y.shape[2]:
            raise ShapeError(f"X {X.shape} and y {y.shape} are not paired windows")
        if eval_set is None:
            eval_set = (X, y)
        else:
            eval_set = (check_series(eval_set[0], "X_val", allow_2d=False),
                        check_series(eval_set[1], "y_val", allow_2d=False))
        rng = np.random.default_rng(self.random_state)
        model = ForecastModel(self._model_config(X.shape[1], y.shape[1], X.shape[2]), rng=rng)
        cfg = TrainConfig(self.lr, self.batch_size, self.max_epochs, self.patience,
                          self.random_state)
        result = train(model, (X, y), eval_set, cfg, rng=rng)
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_features_in_ = X.shape[2]
        self.seq_len_ = X.shape[1]
        self.horizon_ = y.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        squeeze = np.ndim(X) == 2
        X = check_series(X, "X")
        if X.shape[1:] != (self.seq_len_, self.n_features_in_):
            raise ShapeError(f"X has windows {X.shape[1:]}, model was fitted on "
                             f"{(self.seq_len_, self.n_features_in_)}")
        out = predict(self.model_, X)
        return out[0] if squeeze else out

    def score(self, X, y):
        """Negative mean squared error (greater is better)."""
        return -mse_loss(self.predict(X), np.asarray(y, dtype=np.float64))
