"""Floating-point reference model of the probabilistic GLM spiking neuron.

A two-layer network: input channels deliver Bernoulli-encoded spike trains,
each output neuron computes a membrane potential as a windowed linear
combination of recent input spikes plus a bias, and spikes stochastically
with probability sigmoid(potential).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EncodingError(ValueError):
    """Raised when an input vector cannot be rate-encoded."""


def sigmoid(u):
    """Logistic function 1 / (1 + exp(-u)), stable for large |u|."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    if out.ndim == 0:
        return float(out)
    return out


def log_sigmoid(u):
    """log(sigmoid(u)) without underflow: -log(1 + exp(-u))."""
    return -np.logaddexp(0.0, -np.asarray(u, dtype=np.float64))


def log_one_minus_sigmoid(u):
    """log(1 - sigmoid(u)) = log(sigmoid(-u)) without underflow."""
    return -np.logaddexp(0.0, np.asarray(u, dtype=np.float64))


def identity_basis(window: int) -> np.ndarray:
    """Binary basis where each learnable weight owns one delay tap."""
    return np.eye(window, dtype=np.uint8)


@dataclass
class SpikeTrain:
    """Binary raster of input spikes plus a per-channel sign flag.

    raster[j, t] is the spike of channel j at step t+1 (steps are 1-based
    in the dynamics).  Negative input magnitudes are absorbed into sign,
    which flips the effective weight at accumulation time.
    """

    raster: np.ndarray  # (n_inputs, duration) of {0, 1}
    sign: np.ndarray    # (n_inputs,) of {+1, -1}

    def __post_init__(self):
        self.raster = np.asarray(self.raster, dtype=np.uint8)
        self.sign = np.asarray(self.sign, dtype=np.int8)
        if self.raster.ndim != 2:
            raise ValueError("raster must be 2-D (n_inputs, duration)")
        if self.sign.shape != (self.raster.shape[0],):
            raise ValueError("sign must have one entry per input channel")
        if not np.isin(self.raster, (0, 1)).all():
            raise ValueError("raster entries must be 0 or 1")
        if not np.isin(self.sign, (-1, 1)).all():
            raise ValueError("sign entries must be +1 or -1")

    @property
    def n_inputs(self) -> int:
        return self.raster.shape[0]

    @property
    def duration(self) -> int:
        return self.raster.shape[1]


def rate_encode(x, duration: int, rng: np.random.Generator) -> SpikeTrain:
    """Bernoulli rate encoding of a normalized input vector.

    Each channel j spikes independently at every step with probability
    |x_j|; the sign of x_j is carried on the SpikeTrain (0 maps to +1).
    Magnitudes must already be normalized to [0, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise EncodingError("input must be a 1-D feature vector")
    if not np.isfinite(x).all():
        raise EncodingError("input contains non-finite values")
    mag = np.abs(x)
    if (mag > 1.0).any():
        worst = int(np.argmax(mag))
        raise EncodingError(
            f"channel {worst} has magnitude {mag[worst]:g} > 1; normalize first"
        )
    raster = (rng.random((x.size, duration)) < mag[:, None]).astype(np.uint8)
    sign = np.where(x < 0, -1, 1).astype(np.int8)
    return SpikeTrain(raster=raster, sign=sign)


@dataclass
class GlmModel:
    """GLM network parameters: per-(input, output) kernel weights and biases.

    weights has shape (n_inputs, n_outputs, n_basis); with the identity
    basis (the default) n_basis == window and weights[j, i, d] multiplies
    the input spike d+1 steps in the past.
    """

    n_inputs: int
    n_outputs: int
    presentation_time: int
    window: int
    weights: np.ndarray
    biases: np.ndarray
    basis: np.ndarray = field(default=None)  # (window, n_basis) binary

    def __post_init__(self):
        if self.basis is None:
            self.basis = identity_basis(self.window)
        self.basis = np.asarray(self.basis, dtype=np.uint8)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        self.validate()

    def validate(self):
        tau, k = self.basis.shape
        if tau != self.window:
            raise ValueError("basis rows must equal the window length")
        if k > self.window:
            raise ValueError("cannot have more basis vectors than taps")
        if not np.isin(self.basis, (0, 1)).all():
            raise ValueError("basis must be binary")
        if self.weights.shape != (self.n_inputs, self.n_outputs, k):
            raise ValueError(
                f"weights shape {self.weights.shape} does not match "
                f"({self.n_inputs}, {self.n_outputs}, {k})"
            )
        if self.biases.shape != (self.n_outputs,):
            raise ValueError("biases must have one entry per output")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("parameters must be finite")
        if not 1 <= self.window <= self.presentation_time:
            raise ValueError("need 1 <= window <= presentation_time")

    @classmethod
    def zeros(cls, n_inputs, n_outputs, presentation_time, window):
        return cls(
            n_inputs=n_inputs,
            n_outputs=n_outputs,
            presentation_time=presentation_time,
            window=window,
            weights=np.zeros((n_inputs, n_outputs, window)),
            biases=np.zeros(n_outputs),
        )

    def kernels(self) -> np.ndarray:
        """Expanded kernels basis @ weights, shape (n_inputs, n_outputs, window)."""
        return np.einsum("tk,jik->jit", self.basis.astype(np.float64), self.weights)


def expand_kernel(basis: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Expand one weight vector through the basis: alpha = basis @ w."""
    basis = np.asarray(basis, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if basis.ndim != 2 or w.shape != (basis.shape[1],):
        raise ValueError(
            f"basis {basis.shape} and weights {w.shape} do not conform"
        )
    return basis @ w


def build_windows(raster: np.ndarray, window: int) -> np.ndarray:
    """Spike windows for every step of a raster.

    Returns W of shape (duration, n_inputs, window) where W[t-1, j, d-1]
    is channel j's spike d steps before step t (zero before the train
    starts).  Position 0 of a window is the most recent spike.
    """
    raster = np.asarray(raster, dtype=np.uint8)
    n_inputs, duration = raster.shape
    out = np.zeros((duration, n_inputs, window), dtype=np.uint8)
    for d in range(1, window + 1):
        # window tap d at step t sees the spike from step t-d
        out[d:, :, d - 1] = raster[:, : duration - d].T
    return out


def membrane_potential(model: GlmModel, windows, signs, i: int) -> float:
    """Membrane potential of output neuron i for one step.

    windows is the (n_inputs, window) spike-window matrix for the current
    step; signs flips each channel's contribution.  The potential is the
    signed sum of kernel/window dot products plus the neuron's bias.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.shape != (model.n_inputs, model.window):
        raise ValueError(
            f"windows shape {windows.shape} does not match model "
            f"({model.n_inputs}, {model.window})"
        )
    signs = np.asarray(signs, dtype=np.float64)
    alpha = model.kernels()[:, i, :]  # (n_inputs, window)
    return float(np.sum(signs * np.sum(alpha * windows, axis=1)) + model.biases[i])


def membrane_series(model: GlmModel, train: SpikeTrain) -> np.ndarray:
    """Membrane potentials for all steps and outputs: shape (duration, n_outputs)."""
    windows = build_windows(train.raster, model.window).astype(np.float64)
    windows *= train.sign[None, :, None]
    alpha = model.kernels()  # (n_inputs, n_outputs, window)
    u = np.einsum("tjd,jid->ti", windows, alpha)
    u += model.biases[None, :]
    return u
