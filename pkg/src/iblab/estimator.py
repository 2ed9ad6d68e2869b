"""scikit-learn wrapper around the noisy-bottleneck SGD trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, check_X_y

from .dist import Dataset
from .net import NoiseSpec, forward
from .train import TrainConfig, spread_init, train_sgd
from .validation import check_features


class NoisyBottleneckClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Binary classifier with one noisy hidden layer, trained by SGD.

    Parameters
    ----------
    hidden : int
        Width of the hidden (bottleneck) layer.
    activation : str
        Hidden activation token, e.g. ``"leaky_relu:0.1"``.
    noise, noise_param : str, float
        Additive noise family and parameter on the hidden layer.
    steps, lr, batch_size, n_noise : SGD settings.
    random_state : int
        Seed for initialization, minibatches and noise.

    ``transform`` returns the noiseless hidden representation.
    """

    def __init__(self, hidden=4, activation="leaky_relu:0.1", noise="uniform", noise_param=0.05,
                 steps=5000, lr=0.2, batch_size=32, n_noise=1, random_state=0):
        self.hidden = hidden
        self.activation = activation
        self.noise = noise
        self.noise_param = noise_param
        self.steps = steps
        self.lr = lr
        self.batch_size = batch_size
        self.n_noise = n_noise
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError("NoisyBottleneckClassifier handles exactly two classes")
        idx = np.searchsorted(self.classes_, y)
        noise = NoiseSpec(self.noise, self.noise_param) if self.noise != "none" else NoiseSpec()
        net = spread_init(X, self.hidden, self.activation, noise, seed=self.random_state)
        cfg = TrainConfig(steps=self.steps, lr=self.lr, batch_size=self.batch_size,
                          n_noise=self.n_noise, seed=self.random_state)
        self.network_, self.trace_ = train_sgd(Dataset(X, idx), net, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def _noiseless(self):
        check_is_fitted(self, "network_")
        return self.network_.without_noise()

    def predict_proba(self, X):
        net = self._noiseless()
        p1 = net(check_features(X, self.n_features_in_))[:, 0]
        return np.column_stack([1 - p1, p1])

    def predict(self, X):
        p1 = self.predict_proba(X)[:, 1]
        return self.classes_[(p1 > 0.5).astype(int)]

    def transform(self, X):
        net = self._noiseless()
        X = check_features(X, self.n_features_in_)
        return forward(net, X).outputs[1]
