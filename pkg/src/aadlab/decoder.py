"""Trainable EEG -> envelope decoders with hand-derived gradients.

Two families:

``linear_lagged``
    y[t] = b + sum_c sum_{tau=0..L} W[c, tau] * X[t + tau, c], with X taken
    as zero past the end of the segment. The lags look forward in the EEG
    because the neural response trails the stimulus.

``conv_stack``
    Same-length 1-D convolutions over time with tanh between layers, plus an
    additive skip from a 1x1 projection of the input.

Parameters live in one flat float64 vector; ``layout`` maps names to slices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

FAMILIES = ("linear_lagged", "conv_stack")
PARAMS_MAGIC = "aadlab-params"


@dataclass(frozen=True)
class EegSegment:
    data: np.ndarray
    rate_hz: float = 128.0
    trial_id: str = ""

    def __post_init__(self) -> None:
        d = np.asarray(self.data)
        if d.ndim != 2 or d.shape[0] < 2 or d.shape[1] < 1:
            raise ShapeError(f"EEG segment must be T x C with T >= 2, got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DecoderConfig:
    family: str = "linear_lagged"
    channels: int = 16
    lag_samples: int = 32
    layers: int = 2
    kernel: int = 9
    hidden_width: int = 8
    init_seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown decoder family {self.family!r}")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if self.lag_samples < 0:
            raise ConfigError("lag_samples must be >= 0")
        if self.layers < 1 or self.hidden_width < 1:
            raise ConfigError("layers and hidden_width must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd and positive, got {self.kernel}")


def layout(config: DecoderConfig) -> list[tuple[str, tuple[int, ...]]]:
    if config.family == "linear_lagged":
        return [("weight", (config.channels, config.lag_samples + 1)), ("bias", (1,))]
    out = []
    for i in range(config.layers):
        n_in = config.channels if i == 0 else config.hidden_width
        n_out = 1 if i == config.layers - 1 else config.hidden_width
        out.append((f"conv{i}.weight", (n_out, n_in, config.kernel)))
        out.append((f"conv{i}.bias", (n_out,)))
    out.append(("skip.weight", (config.channels,)))
    return out


@dataclass
class DecoderParams:
    values: np.ndarray
    layout: list[tuple[str, tuple[int, ...]]]
    slices: dict[str, slice] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.slices, start = {}, 0
        for name, shape in self.layout:
            stop = start + int(np.prod(shape))
            self.slices[name] = slice(start, stop)
            start = stop
        if start != self.values.size:
            raise ShapeError(f"layout covers {start} values, vector has {self.values.size}")

    def __getitem__(self, name: str) -> np.ndarray:
        shape = dict(self.layout)[name]
        return self.values[self.slices[name]].reshape(shape)

    def __len__(self) -> int:
        return self.values.size

    def with_values(self, values: np.ndarray) -> DecoderParams:
        return DecoderParams(np.array(values, dtype=np.float64), self.layout)

    def copy(self) -> DecoderParams:
        return self.with_values(self.values.copy())


def n_params(config: DecoderConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in layout(config))


def init(config: DecoderConfig) -> DecoderParams:
    """Zeros for the linear family; U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for conv."""
    lay = layout(config)
    if config.family == "linear_lagged":
        return DecoderParams(np.zeros(n_params(config)), lay)
    rng = np.random.default_rng(config.init_seed)
    chunks = []
    for name, shape in lay:
        if name.startswith("skip"):
            fan_in = config.channels
        else:
            layer = int(name[4:name.index(".")])
            n_in = config.channels if layer == 0 else config.hidden_width
            fan_in = n_in * config.kernel
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    return DecoderParams(np.concatenate(chunks), lay)


def _as_batch(x, config: DecoderConfig) -> np.ndarray:
    if isinstance(x, EegSegment):
        x = x.data
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"expected T x C or B x T x C input, got {x.shape}")
    if x.shape[2] != config.channels:
        raise ShapeError(f"input has {x.shape[2]} channels, decoder expects {config.channels}")
    return x


# -- linear family ----------------------------------------------------------

def _pad_future(x: np.ndarray, lag: int) -> np.ndarray:
    return np.concatenate([x, np.zeros((x.shape[0], lag, x.shape[2]))], axis=1)


def _linear_forward(p: DecoderParams, x: np.ndarray, lag: int) -> np.ndarray:
    w = p["weight"]
    t = x.shape[1]
    xp = _pad_future(x, lag)
    y = np.full(x.shape[:2], p["bias"][0])
    for tau in range(lag + 1):
        y += xp[:, tau:tau + t, :] @ w[:, tau]
    return y


def _linear_backward(p: DecoderParams, x: np.ndarray, g: np.ndarray, lag: int) -> np.ndarray:
    t = x.shape[1]
    xp = _pad_future(x, lag)
    gw = np.empty((x.shape[2], lag + 1))
    for tau in range(lag + 1):
        gw[:, tau] = np.einsum("btc,bt->c", xp[:, tau:tau + t, :], g)
    return np.concatenate([gw.ravel(), [g.sum()]])


# -- conv family --------------------------------------------------------------

def _conv_windows(a: np.ndarray, k: int) -> np.ndarray:
    pad = k // 2
    ap = np.pad(a, ((0, 0), (0, 0), (pad, pad)))
    return sliding_window_view(ap, k, axis=2)  # (B, in, T, K)


def _conv_forward_cache(p: DecoderParams, x: np.ndarray, cfg: DecoderConfig):
    h = np.transpose(x, (0, 2, 1))  # (B, C, T)
    acts = [h]
    for i in range(cfg.layers):
        w, b = p[f"conv{i}.weight"], p[f"conv{i}.bias"]
        z = np.einsum("bitk,oik->bot", _conv_windows(h, cfg.kernel), w) + b[None, :, None]
        h = np.tanh(z) if i < cfg.layers - 1 else z
        acts.append(h)
    y = acts[-1][:, 0, :] + np.einsum("c,bct->bt", p["skip.weight"], acts[0])
    return y, acts


def _conv_backward(p: DecoderParams, x: np.ndarray, g: np.ndarray, cfg: DecoderConfig) -> np.ndarray:
    _, acts = _conv_forward_cache(p, x, cfg)
    grads = {"skip.weight": np.einsum("bt,bct->c", g, acts[0])}
    gh = g[:, None, :]
    k, pad, t = cfg.kernel, cfg.kernel // 2, x.shape[1]
    for i in reversed(range(cfg.layers)):
        gz = gh if i == cfg.layers - 1 else gh * (1.0 - acts[i + 1] ** 2)
        h_in, w = acts[i], p[f"conv{i}.weight"]
        grads[f"conv{i}.weight"] = np.einsum("bot,bitk->oik", gz, _conv_windows(h_in, k))
        grads[f"conv{i}.bias"] = gz.sum(axis=(0, 2))
        if i > 0:
            gp = np.zeros((h_in.shape[0], h_in.shape[1], t + 2 * pad))
            for j in range(k):
                gp[:, :, j:j + t] += np.einsum("oi,bot->bit", w[:, :, j], gz)
            gh = gp[:, :, pad:pad + t]
    return np.concatenate([grads[name].ravel() for name, _ in p.layout])


# -- public API -------------------------------------------------------------

def forward_batch(params: DecoderParams, config: DecoderConfig, x) -> np.ndarray:
    """Decode a (B, T, C) batch into (B, T) envelopes."""
    xb = _as_batch(x, config)
    if config.family == "linear_lagged":
        return _linear_forward(params, xb, config.lag_samples)
    return _conv_forward_cache(params, xb, config)[0]


def backward_batch(params: DecoderParams, config: DecoderConfig, x, upstream) -> np.ndarray:
    """Gradient of sum_b L_b given dL_b/dy_b = upstream[b]; returns a flat vector."""
    xb = _as_batch(x, config)
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None]
    if g.shape != xb.shape[:2]:
        raise ShapeError(f"upstream shape {g.shape} does not match input {xb.shape[:2]}")
    if config.family == "linear_lagged":
        return _linear_backward(params, xb, g, config.lag_samples)
    return _conv_backward(params, xb, g, config)


def forward(params: DecoderParams, config: DecoderConfig, x) -> np.ndarray:
    x2 = x.data if isinstance(x, EegSegment) else np.asarray(x)
    if x2.ndim != 2:
        raise ShapeError(f"expected a T x C segment, got shape {x2.shape}")
    return forward_batch(params, config, x2)[0]


def backward(params: DecoderParams, config: DecoderConfig, x, upstream) -> DecoderParams:
    x2 = x.data if isinstance(x, EegSegment) else np.asarray(x)
    up = np.asarray(upstream, dtype=np.float64)
    if x2.ndim != 2 or up.shape != (x2.shape[0],):
        raise ShapeError(f"upstream of shape {up.shape} for a segment of {x2.shape[0]} samples")
    return params.with_values(backward_batch(params, config, x2, up))


def save_params(params: DecoderParams, config: DecoderConfig, path) -> None:
    """One JSON header line describing the layout, then raw little-endian float64."""
    header = {
        "format": PARAMS_MAGIC,
        "version": 1,
        "dtype": "<f8",
        "config": config.__dict__,
        "layout": [[name, list(shape)] for name, shape in params.layout],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(params.values.astype("<f8").tobytes())


def load_params(path) -> tuple[DecoderParams, DecoderConfig]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != PARAMS_MAGIC:
        raise ValueError(f"{path}: not a parameter file")
    lay = [(name, tuple(shape)) for name, shape in header["layout"]]
    values = np.frombuffer(raw[nl + 1:], dtype="<f8").astype(np.float64)
    return DecoderParams(values, lay), DecoderConfig(**header["config"])
