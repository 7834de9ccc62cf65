"""Hardware-exact quantization and datapath primitives.

Covers the post-training uniform quantizer for weights and biases, the
signed fixed-point clip applied to membrane potentials, the shift/add
piecewise-linear sigmoid, and the 16-bit LFSR used to sample output
spikes.  Everything here is integer-exact so a software run reproduces
the digital datapath bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .glm import GlmModel, SpikeTrain
from .training import FtsDecision

LFSR_MASK = 0xFFFF
LFSR_PERIOD = 2**16 - 1


def round_ties_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed fixed-point layout: sign, integer and fractional bit widths.

    Values are code * 2**-frac_bits with codes spanning
    [-2**(int_bits-1+frac_bits), 2**(int_bits-1+frac_bits) - 1], i.e. the
    representable range is [-2**(int_bits-1), 2**(int_bits-1) - step].
    """

    sign_bits: int
    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.sign_bits != 1 or self.int_bits < 1 or self.frac_bits < 0:
            raise ValueError("unsupported fixed-point layout")

    @property
    def width(self) -> int:
        return self.sign_bits + self.int_bits + self.frac_bits

    @property
    def step(self) -> float:
        return 2.0**-self.frac_bits

    @property
    def max_code(self) -> int:
        return 2 ** (self.int_bits - 1 + self.frac_bits) - 1

    @property
    def min_code(self) -> int:
        return -(2 ** (self.int_bits - 1 + self.frac_bits))

    @property
    def max_value(self) -> float:
        return self.max_code * self.step

    @property
    def min_value(self) -> float:
        return self.min_code * self.step


#: datapath format for clipped membrane potentials: range [-8.0, +7.875]
FMT_1_4_3 = FixedPointFormat(1, 4, 3)


def membrane_format(bits: int) -> FixedPointFormat:
    """Fixed-point layout for a b-bit membrane potential (1.4.3 at b=8)."""
    return FixedPointFormat(1, 4, max(bits - 5, 0))


def clip_to_fixed(u, fmt: FixedPointFormat = FMT_1_4_3):
    """Saturate and round a real value onto the fixed-point grid.

    Returns the integer code (value = code * fmt.step).  Rounding is to
    nearest with ties away from zero; out-of-range values saturate.
    """
    u = np.asarray(u, dtype=np.float64)
    if np.isnan(u).any():
        raise ValueError("cannot clip NaN")
    codes = round_ties_away(u / fmt.step)
    codes = np.clip(codes, fmt.min_code, fmt.max_code).astype(np.int64)
    if codes.ndim == 0:
        return int(codes)
    return codes


def fixed_to_real(code, fmt: FixedPointFormat = FMT_1_4_3):
    code = np.asarray(code, dtype=np.float64)
    out = code * fmt.step
    if out.ndim == 0:
        return float(out)
    return out


def quantize_uniform(values, bits: int):
    """Uniform quantizer with one bit reserved for the sign.

    step = (max - min) / 2**(bits-1); codes are round(value / step)
    clamped to +-(2**(bits-1) - 1); dequantized value = code * step.
    A degenerate range (max == min) yields all-zero codes and step 0, as
    does bits=1 (zero magnitude bits; runs but collapses every code).
    """
    if not 1 <= bits <= 16:
        raise ValueError("bits must be in [1, 16]")
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValueError("values must be finite")
    lo, hi = float(values.min()), float(values.max())
    step = (hi - lo) / 2 ** (bits - 1)
    if step == 0.0:
        return np.zeros(values.shape, dtype=np.int16), 0.0
    bound = 2 ** (bits - 1) - 1
    codes = np.clip(round_ties_away(values / step), -bound, bound).astype(np.int16)
    return codes, step


@dataclass
class QuantizedModel:
    """Sign-magnitude b-bit codes for kernels and biases, plus their scales."""

    bits: int
    w_codes: np.ndarray      # (n_inputs, n_outputs, window) int16
    gamma_codes: np.ndarray  # (n_outputs,) int16
    w_min: float
    w_max: float
    gamma_min: float
    gamma_max: float
    presentation_time: int
    window: int

    def __post_init__(self):
        self.w_codes = np.asarray(self.w_codes, dtype=np.int16)
        self.gamma_codes = np.asarray(self.gamma_codes, dtype=np.int16)
        bound = 2 ** (self.bits - 1) - 1
        if np.abs(self.w_codes).max(initial=0) > bound:
            raise ValueError(f"weight codes exceed {self.bits}-bit sign-magnitude")
        if np.abs(self.gamma_codes).max(initial=0) > bound:
            raise ValueError(f"bias codes exceed {self.bits}-bit sign-magnitude")
        if self.w_codes.shape[2] != self.window:
            raise ValueError("w_codes tap dimension must equal window")

    @property
    def n_inputs(self) -> int:
        return self.w_codes.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.w_codes.shape[1]

    @property
    def w_step(self) -> float:
        return (self.w_max - self.w_min) / 2 ** (self.bits - 1)

    @property
    def gamma_step(self) -> float:
        return (self.gamma_max - self.gamma_min) / 2 ** (self.bits - 1)

    def dequant_weights(self) -> np.ndarray:
        return self.w_codes.astype(np.float64) * self.w_step

    def dequant_biases(self) -> np.ndarray:
        return self.gamma_codes.astype(np.float64) * self.gamma_step


def quantize_model(model: GlmModel, bits: int) -> QuantizedModel:
    """Post-training quantization of a trained model's expanded kernels."""
    kernels = model.kernels()
    w_codes, _ = quantize_uniform(kernels, bits)
    gamma_codes, _ = quantize_uniform(model.biases, bits)
    return QuantizedModel(
        bits=bits,
        w_codes=w_codes,
        gamma_codes=gamma_codes,
        w_min=float(kernels.min()),
        w_max=float(kernels.max()),
        gamma_min=float(model.biases.min()),
        gamma_max=float(model.biases.max()),
        presentation_time=model.presentation_time,
        window=model.window,
    )


def pwl_sigmoid(code):
    """Shift/add piecewise-linear sigmoid on 1.4.3-style input codes.

    Input is the signed 8-bit code of x (value = code / 8, any of the 256
    byte patterns).  For x <= 0 the segment value is (1/2 + frac/4) >> |int|
    where int truncates toward zero and frac is the remaining negative
    fraction; positive inputs mirror through y(x) = 1 - y(-x).  The output
    is floor(y * 256) clamped to [0, 255], computed with integer shifts.
    """
    q = np.asarray(code, dtype=np.int64)
    if q.size and (q.min() < -128 or q.max() > 127):
        raise ValueError("input code outside signed 8-bit range")
    mag = np.abs(q)
    k = mag >> 3
    m = mag & 7
    numer = 128 - 8 * m
    neg_out = numer >> k
    pos_out = 256 - ((numer + (np.int64(1) << k) - 1) >> k)
    out = np.where(q <= 0, neg_out, np.minimum(pos_out, 255))
    if out.ndim == 0:
        return int(out)
    return out.astype(np.int64)


def lfsr_next(state: int) -> int:
    """One shift of the 16-bit Fibonacci LFSR with taps (16, 14, 13, 11).

    The feedback polynomial x^16 + x^14 + x^13 + x^11 + 1 is maximal
    length, so any nonzero state walks all 65535 nonzero states.
    """
    if not 0 < state <= LFSR_MASK:
        raise ValueError("LFSR state must be a nonzero 16-bit value")
    bit = (state ^ (state >> 2) ^ (state >> 3) ^ (state >> 5)) & 1
    return (state >> 1) | (bit << 15)


def derive_lfsr_seed(seed: int, index: int) -> int:
    """Deterministic nonzero 16-bit LFSR seed for sample `index` of a run."""
    x = (seed * 0x9E3779B1 + index * 0x85EBCA77 + 0xC2B2AE3D) & 0xFFFFFFFF
    x ^= x >> 16
    s = x & LFSR_MASK
    return s if s else 0x1D87


def spike_decision(pwl: int, state: int, compare_bits: int = 8):
    """Compare a PWL activation against the LFSR and advance it.

    A spike is issued when the activation strictly exceeds the low
    `compare_bits` bits of the current LFSR state; one decision consumes
    one LFSR step.
    """
    mask = (1 << compare_bits) - 1
    spike = pwl > (state & mask)
    return bool(spike), lfsr_next(state)


def quantized_potentials(qm: QuantizedModel, train: SpikeTrain):
    """Integer kernel sums and real membrane potentials for every step.

    Returns (kernel_sums, u_real): kernel_sums[t, i] is the signed sum of
    active weight codes (an integer in weight-step units); u_real adds the
    dequantized bias.
    """
    from .glm import build_windows

    windows = build_windows(train.raster, qm.window).astype(np.int64)
    signed = qm.w_codes.astype(np.int64) * train.sign.astype(np.int64)[:, None, None]
    kernel_sums = np.einsum("tjd,jid->ti", windows, signed)
    gamma_real = qm.dequant_biases()
    u_real = kernel_sums.astype(np.float64) * qm.w_step + gamma_real[None, :]
    return kernel_sums, u_real


def infer_fts_quantized(
    qm: QuantizedModel, train: SpikeTrain, lfsr_seed: int
) -> FtsDecision:
    """First-to-spike inference through the b-bit quantized datapath.

    Membrane potentials come from integer code accumulation, are clipped
    to the b-bit fixed-point membrane format, pushed through the PWL
    sigmoid (output requantized to b bits) and compared against the low
    b bits of the shared LFSR, one draw per neuron per step in index
    order.  Falls back to the argmax of the final clipped potentials when
    nothing spikes.
    """
    fmt = membrane_format(qm.bits)
    embed_shift = 3 - fmt.frac_bits
    out_shift = 8 - min(qm.bits, 8)
    compare_bits = min(qm.bits, 8)

    _, u_real = quantized_potentials(qm, train)
    state = lfsr_seed
    u_codes = None
    for t in range(u_real.shape[0]):
        u_codes = clip_to_fixed(u_real[t], fmt)
        pwl = pwl_sigmoid(u_codes << embed_shift) >> out_shift
        fired = -1
        for i in range(qm.n_outputs):
            spike, state = spike_decision(int(pwl[i]), state, compare_bits)
            if spike and fired < 0:
                fired = i
        if fired >= 0:
            return FtsDecision(fired, t + 1, False)
    return FtsDecision(int(np.argmax(u_codes)), None, True)


def evaluate_quantized(qm, magnitudes, signs, labels, seed, limit=None) -> float:
    """Accuracy of quantized first-to-spike inference with fresh encodings."""
    from .glm import rate_encode

    n = len(labels) if limit is None else min(limit, len(labels))
    rng = np.random.default_rng(seed)
    correct = 0
    for k in range(n):
        enc = rate_encode(magnitudes[k], qm.presentation_time, rng)
        train = SpikeTrain(raster=enc.raster, sign=np.asarray(signs[k], dtype=np.int8))
        decision = infer_fts_quantized(qm, train, derive_lfsr_seed(seed, k))
        correct += decision.predicted_class == labels[k]
    return correct / n if n else 0.0
