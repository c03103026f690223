"""The four forecaster variants and their latent rollout.

=========== ================= ============ ========
variant     control encoder   transition   decoder
=========== ================= ============ ========
Baseline    common            MLP          common
BaselineSC  separate          MLP          common
OursHD      separate          structured   hard
Ours        separate          structured   common
=========== ================= ============ ========

Representations are (batch, n*L) tensors whose i-th block of L columns is the
state (or control) representation of variable i.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as tf
from .errors import ConfigurationError, ParameterError, ShapeError
from .tensor import Tensor

VARIANTS = ("Baseline", "BaselineSC", "OursHD", "Ours")
_LAYOUT = {
    "Baseline": ("common", "mlp", "common"),
    "BaselineSC": ("separate", "mlp", "common"),
    "OursHD": ("separate", "structured", "hard"),
    "Ours": ("separate", "structured", "common"),
}


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    n: int = 2
    T: int = 11
    L: int = 8
    kernel_size: int = 3
    dilations: tuple[int, ...] = field(default=(1, 2, 4))

    def __post_init__(self):
        if self.variant not in _LAYOUT:
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if min(self.n, self.T, self.L, self.kernel_size) < 1 or not self.dilations:
            raise ConfigurationError(f"invalid model sizes: {self}")
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))

    @property
    def control_encoder(self) -> str:
        return _LAYOUT[self.variant][0]

    @property
    def transition(self) -> str:
        return _LAYOUT[self.variant][1]

    @property
    def decoder(self) -> str:
        return _LAYOUT[self.variant][2]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def _block_diag(blocks) -> Tensor:
    """Place ``blocks`` along the diagonal of the first two axes, zeros elsewhere."""
    rows = []
    for r, blk in enumerate(blocks):
        cols = []
        for c, other in enumerate(blocks):
            if c == r:
                cols.append(blk)
            else:
                cols.append(np.zeros((blk.shape[0], other.shape[1]) + blk.shape[2:]))
        rows.append(tf.concat(cols, axis=1))
    return tf.concat(rows, axis=0)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


class Forecaster:
    """Encoders, transition model and decoder(s) of one variant.

    ``params`` is an insertion-ordered dict; that order is the checkpoint
    parameter order.
    """

    def __init__(self, config: ModelConfig, seed=0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        n, L = config.n, config.L
        self._conv_stack(rng, "state_enc", n, n * L)
        if config.control_encoder == "common":
            self._conv_stack(rng, "ctrl_enc", n, n * L)
        else:
            for i in range(n):
                self._conv_stack(rng, f"ctrl_enc{i + 1}", 1, L)
        if config.transition == "mlp":
            self._affine(rng, "trans.1", 2 * n * L, 2 * n * L)
            self._affine(rng, "trans.2", 2 * n * L, n * L)
        else:
            for i in range(n):
                for j in range(n):
                    self._affine(rng, f"f1.{i + 1}{j + 1}", 2 * L, L)
            for j in range(n):
                self._affine(rng, f"f2.{j + 1}", n * L, L)
        if config.decoder == "common":
            self._affine(rng, "dec", n * L, n)
        else:
            for j in range(n):
                self._affine(rng, f"dec{j + 1}", L, 1)

    # -- construction -------------------------------------------------------

    def _conv_stack(self, rng, prefix, c_in, c_out):
        k = self.config.kernel_size
        for layer, _ in enumerate(self.config.dilations):
            fan_in = c_in * k
            self.params[f"{prefix}.{layer}.w"] = _uniform(rng, (c_out, c_in, k), fan_in)
            self.params[f"{prefix}.{layer}.b"] = _zeros((c_out, 1))
            c_in = c_out

    def _affine(self, rng, prefix, fan_in, fan_out):
        self.params[f"{prefix}.w"] = _uniform(rng, (fan_in, fan_out), fan_in)
        self.params[f"{prefix}.b"] = _zeros((fan_out,))

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self, prefix: str = "") -> int:
        return sum(p.data.size for name, p in self.params.items() if name.startswith(prefix))

    def copy(self) -> "Forecaster":
        clone = Forecaster.__new__(Forecaster)
        clone.config = self.config
        clone.params = {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.params.items()}
        return clone

    # -- encoders -----------------------------------------------------------

    def _run_conv(self, prefix, window) -> Tensor:
        out = window
        last = len(self.config.dilations) - 1
        for layer, dilation in enumerate(self.config.dilations):
            out = tf.conv1d_causal(out, self.params[f"{prefix}.{layer}.w"], dilation)
            out = out + self.params[f"{prefix}.{layer}.b"]
            if layer < last:
                out = tf.relu(out)
        return out[:, :, -1]

    def _check_window(self, window, channels):
        window = tf.as_tensor(window)
        if window.ndim == 2:
            window = tf.reshape(window, (1,) + window.shape)
        if window.ndim != 3 or window.shape[1] != channels or window.shape[2] != self.config.T:
            raise ShapeError(f"expected window (batch, {channels}, {self.config.T}), got {window.shape}")
        return window

    def encode_state(self, x_past) -> Tensor:
        """z: (batch, n*L), block i from the final time step of the conv stack."""
        return self._run_conv("state_enc", self._check_window(x_past, self.config.n))

    def encode_controls(self, u_window) -> Tensor:
        if self.config.control_encoder == "common":
            return self.encode_controls_common(u_window)
        return self.encode_controls_separate(u_window)

    def encode_controls_common(self, u_window) -> Tensor:
        if self.config.control_encoder != "common":
            raise ConfigurationError(f"{self.config.variant} has separate control encoders")
        return self._run_conv("ctrl_enc", self._check_window(u_window, self.config.n))

    def encode_controls_separate(self, u_window) -> Tensor:
        """h(i) comes from u_i's window alone, through encoder i.

        The n encoders run as one conv stack whose kernels are block diagonal
        (assembled from the per-encoder parameters), so off-block weights are
        exact zeros and isolation is exact.
        """
        n = self.config.n
        if self.config.control_encoder != "separate":
            raise ConfigurationError(f"{self.config.variant} has a common control encoder")
        have = sum(1 for i in range(n) if f"ctrl_enc{i + 1}.0.w" in self.params)
        if have != n:
            raise ConfigurationError(f"{have} control encoders for n={n} controls")
        u_window = self._check_window(u_window, n)
        out = u_window
        last = len(self.config.dilations) - 1
        for layer, dilation in enumerate(self.config.dilations):
            names = [f"ctrl_enc{i + 1}.{layer}" for i in range(n)]
            kernel = _block_diag([self.params[f"{nm}.w"] for nm in names])
            bias = tf.concat([self.params[f"{nm}.b"] for nm in names], axis=0)
            out = tf.conv1d_causal(out, kernel, dilation) + bias
            if layer < last:
                out = tf.relu(out)
        return out[:, :, -1]

    # -- transition ---------------------------------------------------------

    def _block(self, rep: Tensor, i: int) -> Tensor:
        L = self.config.L
        return rep[:, i * L : (i + 1) * L]

    def transition(self, z: Tensor, h: Tensor, weights=None) -> Tensor:
        if self.config.transition == "mlp":
            return self.transition_mlp(z, h)
        return self.transition_structured(z, h, weights)

    def transition_mlp(self, z, h) -> Tensor:
        p = self.params
        width = self.config.n * self.config.L
        if z.shape[-1] != width or h.shape[-1] != width:
            raise ShapeError(f"transition expects width {width}, got {z.shape} and {h.shape}")
        hidden = tf.relu(tf.linear(tf.concat([z, h], axis=1), p["trans.1.w"], p["trans.1.b"]))
        return tf.linear(hidden, p["trans.2.w"], p["trans.2.b"])

    def pair_effects(self, z, h) -> list[list[Tensor]]:
        """e[i][j] = relu(f1_ij([z(i); h(i)])), 0-based indices."""
        n, p = self.config.n, self.params
        width = n * self.config.L
        if z.shape[-1] != width or h.shape[-1] != width:
            raise ShapeError(f"transition expects width {width}, got {z.shape} and {h.shape}")
        effects = []
        for i in range(n):
            zh = tf.concat([self._block(z, i), self._block(h, i)], axis=1)
            effects.append(
                [tf.relu(tf.linear(zh, p[f"f1.{i + 1}{j + 1}.w"], p[f"f1.{i + 1}{j + 1}.b"])) for j in range(n)]
            )
        return effects

    def transition_structured(self, z, h, weights=None) -> Tensor:
        """z~(j) = f2_j([e(1,j); ..; e(n,j)]) with e(i,j) from ``pair_effects``.

        Evaluated as two dense layers whose weights are assembled from the
        n^2 + n small networks, with exact zeros wherever a pair does not
        interact.  ``weights`` lets a rollout reuse one assembly for all steps.
        """
        width = self.config.n * self.config.L
        if z.shape[-1] != width or h.shape[-1] != width:
            raise ShapeError(f"transition expects width {width}, got {z.shape} and {h.shape}")
        w1, b1, w2, b2 = weights or self._structured_weights()
        hidden = tf.relu(tf.linear(tf.concat([z, h], axis=1), w1, b1))
        return tf.linear(hidden, w2, b2)

    def _structured_weights(self):
        n, L, p = self.config.n, self.config.L, self.params
        # rows: [z(1) .. z(n), h(1) .. h(n)]; hidden columns ordered (j, i)
        zero = np.zeros((L, L))
        rows = []
        for half in (slice(0, L), slice(L, 2 * L)):
            for r in range(n):
                cols = [p[f"f1.{i + 1}{j + 1}.w"][half] if i == r else zero for j in range(n) for i in range(n)]
                rows.append(tf.concat(cols, axis=1))
        w1 = tf.concat(rows, axis=0)
        b1 = tf.concat([p[f"f1.{i + 1}{j + 1}.b"] for j in range(n) for i in range(n)], axis=0)
        w2 = _block_diag([p[f"f2.{j + 1}.w"] for j in range(n)])
        b2 = tf.concat([p[f"f2.{j + 1}.b"] for j in range(n)], axis=0)
        return w1, b1, w2, b2

    # -- decoders -----------------------------------------------------------

    def decode(self, z_next: Tensor, weights=None) -> Tensor:
        if self.config.decoder == "common":
            return self.decode_common(z_next)
        return self.decode_hard(z_next, weights)

    def decode_common(self, z_next) -> Tensor:
        if "dec.w" not in self.params:
            raise ConfigurationError(f"{self.config.variant} has hard decoders")
        width = self.config.n * self.config.L
        if z_next.shape[-1] != width:
            raise ShapeError(f"decoder expects width {width}, got {z_next.shape}")
        return tf.linear(z_next, self.params["dec.w"], self.params["dec.b"])

    def decode_hard(self, z_next, weights=None) -> Tensor:
        """x_j depends on block j of z_next only."""
        n = self.config.n
        have = sum(1 for j in range(n) if f"dec{j + 1}.w" in self.params)
        if have != n:
            raise ConfigurationError(f"{have} hard decoders for n={n} states")
        weight, bias = weights or self._hard_decoder_weights()
        return tf.linear(z_next, weight, bias)

    def _hard_decoder_weights(self):
        n = self.config.n
        weight = _block_diag([self.params[f"dec{j + 1}.w"] for j in range(n)])
        bias = tf.concat([self.params[f"dec{j + 1}.b"] for j in range(n)], axis=0)
        return weight, bias

    # -- rollout ------------------------------------------------------------

    def roll(self, z: Tensor, control_stream, first: int, steps: int):
        """Advance latent ``z`` through steps ``first .. first+steps-1``.

        ``control_stream`` is (batch, n, T+M) holding u[t-T .. t+M-1]; step i
        reads the window u[t+i-T .. t+i-1] = stream[:, :, i : i+T].
        Returns (predictions (batch, n, steps), final latent).
        """
        T = self.config.T
        stream = tf.as_tensor(control_stream)
        if stream.shape[-1] < first + steps - 1 + T:
            raise ParameterError(f"control stream of length {stream.shape[-1]} too short for step {first + steps - 1}")
        # all windows go through the encoder as one stacked batch; every
        # sample is computed independently, so this matches step-by-step
        # encoding exactly
        batch = stream.shape[0]
        windows = tf.concat([stream[:, :, i : i + T] for i in range(first, first + steps)], axis=0)
        h_all = self.encode_controls(windows)
        trans_w = self._structured_weights() if self.config.transition == "structured" else None
        dec_w = self._hard_decoder_weights() if self.config.decoder == "hard" else None
        preds = []
        for s in range(steps):
            z = self.transition(z, h_all[s * batch : (s + 1) * batch], trans_w)
            x_hat = self.decode(z, dec_w)
            preds.append(tf.reshape(x_hat, x_hat.shape + (1,)))
        return tf.concat(preds, axis=2), z

    def rollout(self, x_past, u_past, u_future, horizon: int | None = None) -> Tensor:
        """Latent-space forecast of the next ``horizon`` states, (batch, n, horizon)."""
        u_future = tf.as_tensor(u_future)
        horizon = u_future.shape[-1] if horizon is None else horizon
        if horizon < 1:
            raise ParameterError(f"horizon must be >= 1, got {horizon}")
        if horizon > u_future.shape[-1]:
            raise ParameterError(f"u_future has {u_future.shape[-1]} steps, horizon {horizon}")
        u_past = tf.as_tensor(u_past)
        if u_past.ndim == 2:
            u_past = tf.reshape(u_past, (1,) + u_past.shape)
            u_future = tf.reshape(u_future, (1,) + u_future.shape)
        stream = tf.concat([u_past, u_future], axis=2)
        z = self.encode_state(x_past)
        preds, _ = self.roll(z, stream, 1, horizon)
        return preds
