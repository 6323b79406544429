"""Minimal reverse-mode autodiff over numpy for the SR network."""

from .ops import (ACTIVATIONS, PADDINGS, add, concat_channels, conv2d, leaky_relu, logcosh,
                  logcosh_loss, relu)
from .optim import AdamConfig, AdamState, adam_step
from .tensor import Graph, Node, Tensor, active_graph, backward, record

__all__ = [
    "ACTIVATIONS", "PADDINGS", "AdamConfig", "AdamState", "Graph", "Node", "Tensor",
    "active_graph", "adam_step", "add", "backward", "concat_channels", "conv2d", "leaky_relu",
    "logcosh", "logcosh_loss", "record", "relu",
]
