"""Networks: density mapper, spatial/directional MLPs with SH feature
encoding, and the small pilot network used at the start of training.

Main network, per ray (or per sample in standard rendering)::

    feature -> spatial MLP -> [SH feature vectors | bottleneck]
    SH feature vector (l, m) * Y_l^m(d) -> encoding
    [encoding | bottleneck] -> directional MLP -> sigmoid -> RGB
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import ParamArray, Tape
from .errors import NumericError, ShapeError, UsageError
from .sh import eval_sh, sh_count

ACTIVATIONS = ("gelu", "relu", "identity")


@dataclass(frozen=True)
class MlpSpec:
    """``layers`` hidden layers of ``width`` units, then a linear output.

    ``layers=0`` is a single linear map (the linear density mapper).
    """

    layers: int
    width: int
    activation: str = "gelu"
    output_dim: int = 3

    def __post_init__(self):
        if self.layers < 0 or self.width < 1 or self.output_dim < 1:
            raise ValueError(f"invalid MLP spec {self}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def dims(self, in_dim: int) -> list[int]:
        return [in_dim] + [self.width] * self.layers + [self.output_dim]


def mlp_param_count(in_dim: int, spec: MlpSpec) -> int:
    dims = spec.dims(in_dim)
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


class Mlp:
    def __init__(self, name: str, in_dim: int, spec: MlpSpec, rng, dtype=np.float32):
        self.name = name
        self.in_dim = in_dim
        self.spec = spec
        self.forward_count = 0
        dims = spec.dims(in_dim)
        self.weights: list[ParamArray] = []
        self.biases: list[ParamArray] = []
        n_layers = len(dims) - 1
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            # He-uniform for hidden layers, LeCun-uniform for the linear output
            gain = 3.0 if i == n_layers - 1 else 6.0
            bound = math.sqrt(gain / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
            self.weights.append(ParamArray(w, requires_grad=True, name=f"{name}.{i}.weight"))
            self.biases.append(ParamArray(np.zeros(fan_out, dtype=dtype), requires_grad=True,
                                          name=f"{name}.{i}.bias"))

    def parameters(self) -> dict[str, ParamArray]:
        out = {}
        for w, b in zip(self.weights, self.biases):
            out[w.name] = w
            out[b.name] = b
        return out

    def zero_output_layer(self):
        self.weights[-1].values[...] = 0
        self.biases[-1].values[...] = 0

    def forward(self, tape: Tape, x: ParamArray) -> ParamArray:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"{self.name}: expected {self.in_dim} inputs, got {x.shape}")
        self.forward_count += x.shape[0]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            try:
                h = tape.add_bias(tape.matmul(h, w), b)
                if i < last:
                    h = tape.activation(h, self.spec.activation)
            except NumericError as exc:
                raise NumericError(f"{self.name} layer {i}: {exc}") from exc
        return h


@dataclass(frozen=True)
class NetworkConfig:
    activation: str = "gelu"
    spatial_layers: int = 2
    directional_layers: int = 4
    width: int = 64
    bottleneck_dim: int = 64
    sh_degree: int = 4
    sh_features: int = 4
    sh_encoding: str = "shfe"
    density_hidden: int = 0
    pilot_layers: int = 2
    pilot_width: int = 64
    pilot_sh_degree: int = 2
    linear_test_mode: bool = False

    def __post_init__(self):
        if self.sh_encoding not in ("shfe", "sh"):
            raise ValueError(f"sh_encoding must be 'shfe' or 'sh', got {self.sh_encoding!r}")
        if self.activation not in ("gelu", "relu"):
            raise ValueError(f"activation must be gelu or relu, got {self.activation!r}")

    @property
    def sh_feature_dim(self) -> int:
        return self.sh_features if self.sh_encoding == "shfe" else 1

    @property
    def spatial_out_dim(self) -> int:
        learned = sh_count(self.sh_degree) * self.sh_features if self.sh_encoding == "shfe" else 0
        return learned + self.bottleneck_dim

    @property
    def directional_in_dim(self) -> int:
        return sh_count(self.sh_degree) * self.sh_feature_dim + self.bottleneck_dim


def density_activation(tape: Tape, raw: ParamArray) -> ParamArray:
    return tape.trunc_exp(raw, -15.0, 15.0)


def sh_feature_encode(tape: Tape, sh, feats: ParamArray) -> ParamArray:
    """Scale SH feature vector (l, m) by Y_l^m(d); flatten in (l, m) order.

    ``sh`` has shape (n, n_basis); ``feats`` has shape (n, n_basis, k).
    """
    sh = np.asarray(sh)
    if feats.values.ndim != 3 or feats.shape[:2] != sh.shape:
        raise ShapeError(f"SH values {sh.shape} do not match feature set {feats.shape}")
    n, nb, k = feats.shape
    scaled = tape.scale(feats, np.broadcast_to(sh[:, :, None], feats.shape).astype(feats.dtype))
    return tape.reshape(scaled, (n, nb * k))


class NetworkBundle:
    """All network parameters for one scene model."""

    def __init__(self, in_dim: int, config: NetworkConfig = NetworkConfig(), rng=None,
                 dtype=np.float32):
        rng = np.random.default_rng(rng)
        self.in_dim = in_dim
        self.config = config
        self.dtype = dtype
        act = "identity" if config.linear_test_mode else config.activation
        if config.density_hidden:
            dspec = MlpSpec(1, config.density_hidden, config.activation, 1)
        else:
            dspec = MlpSpec(0, 1, config.activation, 1)
        self.density_mapper = Mlp("density", in_dim, dspec, rng, dtype)
        self.spatial = Mlp("spatial", in_dim,
                           MlpSpec(config.spatial_layers, config.width, act, config.spatial_out_dim),
                           rng, dtype)
        self.directional = Mlp("directional", config.directional_in_dim,
                               MlpSpec(config.directional_layers, config.width, act, 3), rng, dtype)
        self.pilot: Mlp | None = Mlp(
            "pilot", in_dim + sh_count(config.pilot_sh_degree),
            MlpSpec(config.pilot_layers, config.pilot_width, act, 3), rng, dtype)
        self.main_evals = 0
        self.pilot_evals = 0

    # -- bookkeeping ---------------------------------------------------
    def groups(self) -> dict[str, dict[str, ParamArray]]:
        out = {
            "density": self.density_mapper.parameters(),
            "main": {**self.spatial.parameters(), **self.directional.parameters()},
        }
        if self.pilot is not None:
            out["pilot"] = self.pilot.parameters()
        return out

    def parameters(self) -> dict[str, ParamArray]:
        out = {}
        for group in self.groups().values():
            out.update(group)
        return out

    def discard_pilot(self):
        self.pilot = None

    def reset_counters(self):
        self.main_evals = 0
        self.pilot_evals = 0

    # -- forward passes ------------------------------------------------
    def density(self, tape: Tape, feats: ParamArray) -> ParamArray:
        raw = self.density_mapper.forward(tape, feats)
        return density_activation(tape, tape.reshape(raw, (raw.shape[0],)))

    def _sh(self, degree, dirs):
        return eval_sh(degree, np.asarray(dirs, dtype=np.float64), tol=1e-5).astype(self.dtype)

    def main_forward(self, tape: Tape, feats: ParamArray, dirs) -> ParamArray:
        """RGB (or raw logits in linear test mode) for features and view dirs."""
        cfg = self.config
        n = feats.shape[0]
        self.main_evals += n
        h = self.spatial.forward(tape, feats)
        sh = self._sh(cfg.sh_degree, dirs)
        nb = sh.shape[1]
        if cfg.sh_encoding == "shfe":
            split = nb * cfg.sh_features
            sh_feats = tape.reshape(tape.columns(h, 0, split), (n, nb, cfg.sh_features))
            encoding = sh_feature_encode(tape, sh, sh_feats)
            bottleneck = tape.columns(h, split, h.shape[1])
        else:
            encoding = ParamArray(sh)
            bottleneck = h
        logits = self.directional.forward(tape, tape.concat([encoding, bottleneck]))
        if cfg.linear_test_mode:
            return logits
        return tape.sigmoid(logits)

    def pilot_forward(self, tape: Tape, feats: ParamArray, dirs) -> ParamArray:
        if self.pilot is None:
            raise UsageError("pilot network has been discarded")
        self.pilot_evals += feats.shape[0]
        sh = ParamArray(self._sh(self.config.pilot_sh_degree, dirs))
        logits = self.pilot.forward(tape, tape.concat([feats, sh]))
        if self.config.linear_test_mode:
            return logits
        return tape.sigmoid(logits)


def main_net_forward(rendered_feat, d, bundle: NetworkBundle, tape: Tape | None = None):
    tape = tape if tape is not None else Tape(enabled=False)
    feats = rendered_feat if isinstance(rendered_feat, ParamArray) else ParamArray(
        np.atleast_2d(np.asarray(rendered_feat, dtype=bundle.dtype)))
    return bundle.main_forward(tape, feats, np.atleast_2d(d))


def pilot_forward(feat, d, bundle: NetworkBundle, tape: Tape | None = None):
    tape = tape if tape is not None else Tape(enabled=False)
    feats = feat if isinstance(feat, ParamArray) else ParamArray(
        np.atleast_2d(np.asarray(feat, dtype=bundle.dtype)))
    return bundle.pilot_forward(tape, feats, np.atleast_2d(d))
