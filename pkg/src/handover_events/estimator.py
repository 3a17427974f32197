"""scikit-learn compatible wrappers around the windowing and model code."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .net import ModelDims
from .train import TrainConfig, TrainingData, predict, train
from .windowing import FrameLabel, WindowSpec, build_windows, window_features


class WindowTransformer(TransformerMixin, BaseEstimator):
    """Turn a list of :class:`LabeledFrameStream` into a window tensor ``(n, T, F)``.

    ``window_labels`` gives the matching majority-vote labels, so that
    ``transform(streams)`` and ``window_labels(streams)`` line up row by row.
    """

    def __init__(self, frames_per_window=8, frame_stride=4, sequence_stride=2):
        self.frames_per_window = frames_per_window
        self.frame_stride = frame_stride
        self.sequence_stride = sequence_stride

    def _spec(self):
        return WindowSpec(self.frames_per_window, self.frame_stride, self.sequence_stride)

    def fit(self, streams, y=None):
        self.spec_ = self._spec()
        return self

    def transform(self, streams):
        check_is_fitted(self, "spec_")
        parts = [window_features(s, build_windows(s.labels, self.spec_)) for s in streams]
        parts = [p for p in parts if len(p)]
        if not parts:
            F = streams[0].feature_dim if streams else 0
            return np.empty((0, self.spec_.frames_per_window, F))
        return np.concatenate(parts)

    def window_labels(self, streams):
        spec = self._spec()
        return np.array([int(w.train_label) for s in streams for w in build_windows(s.labels, spec)],
                        dtype=np.int64)


class HandoverDetector(ClassifierMixin, BaseEstimator):
    """Multi-task window classifier: p(handover) and p(direction | handover).

    ``fit`` takes windows ``X`` of shape ``(n, T, F)`` and labels ``y`` in
    {0: Receives, 1: Gives, 2: Idle}. ``sampler_probs`` is ordered
    (Idle, Receives, Gives).
    """

    def __init__(self, embedding_dim=64, hidden_dim=64, lr_projection=3e-6, lr_temporal=1e-5,
                 wd_projection=1e-4, wd_temporal=1e-5, batch_size=8, accumulation_steps=2,
                 max_grad_norm=1.0, warmup_fraction=0.05, epochs=10, epoch_fraction=1 / 3,
                 sampler_probs=(0.6, 0.2, 0.2), early_stop_patience=3, projection_dropout=0.3,
                 lstm_dropout=0.4, w_pos=1.5, lambda_det=2.5, lambda_dir=1.0,
                 dir_class_weights=None, random_state=0):
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.lr_projection = lr_projection
        self.lr_temporal = lr_temporal
        self.wd_projection = wd_projection
        self.wd_temporal = wd_temporal
        self.batch_size = batch_size
        self.accumulation_steps = accumulation_steps
        self.max_grad_norm = max_grad_norm
        self.warmup_fraction = warmup_fraction
        self.epochs = epochs
        self.epoch_fraction = epoch_fraction
        self.sampler_probs = sampler_probs
        self.early_stop_patience = early_stop_patience
        self.projection_dropout = projection_dropout
        self.lstm_dropout = lstm_dropout
        self.w_pos = w_pos
        self.lambda_det = lambda_det
        self.lambda_dir = lambda_dir
        self.dir_class_weights = dir_class_weights
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        idle, receives, gives = self.sampler_probs
        return TrainConfig(
            lr_projection=self.lr_projection, lr_temporal=self.lr_temporal,
            wd_projection=self.wd_projection, wd_temporal=self.wd_temporal,
            batch_size=self.batch_size, accumulation_steps=self.accumulation_steps,
            max_grad_norm=self.max_grad_norm, warmup_fraction=self.warmup_fraction,
            epochs=self.epochs, epoch_fraction=self.epoch_fraction,
            sampler_idle=idle, sampler_receives=receives, sampler_gives=gives,
            early_stop_patience=self.early_stop_patience,
            projection_dropout=self.projection_dropout, lstm_dropout=self.lstm_dropout,
            w_pos=self.w_pos, lambda_det=self.lambda_det, lambda_dir=self.lambda_dir,
            dir_class_weights=self.dir_class_weights, seed=int(self.random_state or 0),
        )

    @staticmethod
    def _check_windows(X):
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"expected windows of shape (n, T, F), got {X.shape}")
        return X

    def fit(self, X, y, X_val=None, y_val=None):
        X = self._check_windows(X)
        y = np.asarray(y, dtype=np.int64)
        if len(y) != len(X):
            raise ValueError("X and y have different lengths")
        if not np.isin(y, [0, 1, 2]).all():
            raise ValueError("labels must be in {0, 1, 2}")
        if X_val is not None:
            X_val = self._check_windows(X_val)
            y_val = np.asarray(y_val, dtype=np.int64)
        dims = ModelDims(X.shape[2], self.embedding_dim, self.hidden_dim)
        result = train(TrainingData(X, y, X_val, y_val), dims, self._train_config())
        self.params_ = result.params
        self.history_ = result.history
        self.n_features_in_ = X.shape[2]
        self.classes_ = np.array([int(c) for c in FrameLabel])
        return self

    def scores(self, X):
        """``(p_det, p_gives)`` per window."""
        check_is_fitted(self, "params_")
        X = self._check_windows(X)
        if X.shape[2] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[2]} features, model was fit on {self.n_features_in_}")
        p_det, p_dir = predict(self.params_, X)
        return p_det, p_dir[:, 1]

    def predict_proba(self, X):
        """Columns ordered as ``classes_``: Receives, Gives, Idle."""
        p_det, p_gives = self.scores(X)
        return np.column_stack([p_det * (1.0 - p_gives), p_det * p_gives, 1.0 - p_det])

    def predict(self, X):
        p_det, p_gives = self.scores(X)
        direction = np.where(p_gives >= 0.5, int(FrameLabel.GIVES), int(FrameLabel.RECEIVES))
        return np.where(p_det >= 0.5, direction, int(FrameLabel.IDLE))
