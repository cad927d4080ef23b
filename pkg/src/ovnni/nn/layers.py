"""Layer and network architecture descriptions."""

from __future__ import annotations

from dataclasses import dataclass, field

DENSE = "dense"
RELU = "relu"
BATCH_NORM = "batch_norm"
DROPOUT = "dropout"
SOFTMAX_OUTPUT = "softmax_output"

LAYER_KINDS = (DENSE, RELU, BATCH_NORM, DROPOUT, SOFTMAX_OUTPUT)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == DENSE:
            if self.in_dim < 1 or self.out_dim < 1:
                raise ValueError("dense layers need in_dim >= 1 and out_dim >= 1")
        elif self.in_dim != self.out_dim:
            raise ValueError(f"{self.kind} layers must keep their width")
        if self.kind == DROPOUT:
            if not 0.0 <= self.dropout_rate < 1.0:
                raise ValueError("dropout_rate must lie in [0, 1)")
        elif self.dropout_rate != 0.0:
            raise ValueError("dropout_rate only applies to dropout layers")


@dataclass(frozen=True)
class MlpSpec:
    """A feed-forward stack ending in exactly one softmax output layer."""

    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer width mismatch: {prev.kind} gives {prev.out_dim}, "
                    f"{nxt.kind} wants {nxt.in_dim}"
                )
        softmax_at = [i for i, l in enumerate(layers) if l.kind == SOFTMAX_OUTPUT]
        if softmax_at != [len(layers) - 1]:
            raise ValueError("network must end with exactly one softmax output layer")
        object.__setattr__(self, "layers", layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def has_dropout(self) -> bool:
        return any(l.kind == DROPOUT for l in self.layers)


def mlp(in_dim: int, hidden, n_out: int, *, batch_norm: bool = True,
        dropout_rate: float = 0.0) -> MlpSpec:
    """Standard classifier stack: Dense+ReLU per hidden width (plus optional
    Dropout after each), one BatchNorm after the last hidden layer, then the
    output Dense and softmax."""
    hidden = list(hidden)
    layers: list[LayerSpec] = []
    width = in_dim
    for h in hidden:
        layers.append(LayerSpec(DENSE, width, h))
        layers.append(LayerSpec(RELU, h, h))
        if dropout_rate > 0.0:
            layers.append(LayerSpec(DROPOUT, h, h, dropout_rate))
        width = h
    if batch_norm and hidden:
        layers.append(LayerSpec(BATCH_NORM, width, width))
    layers.append(LayerSpec(DENSE, width, n_out))
    layers.append(LayerSpec(SOFTMAX_OUTPUT, n_out, n_out))
    return MlpSpec(tuple(layers))


def with_output_width(spec: MlpSpec, n_out: int) -> MlpSpec:
    """Same stack with the final dense layer resized (e.g. for binary heads)."""
    layers = list(spec.layers)
    final_dense = len(layers) - 2
    if layers[final_dense].kind != DENSE:
        raise ValueError("expected a dense layer right before the softmax output")
    layers[final_dense] = LayerSpec(DENSE, layers[final_dense].in_dim, n_out)
    layers[-1] = LayerSpec(SOFTMAX_OUTPUT, n_out, n_out)
    return MlpSpec(tuple(layers))
