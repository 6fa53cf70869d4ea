from .model import (
    GraphView,
    ModelParams,
    corrupt,
    dgi_loss,
    discriminate,
    forward,
    loss_and_grads,
    prelu,
    readout,
    sage_aggregate,
    view_from_graph,
    view_from_subgraph,
)
from .train import TrainConfig, embed_all, train

__all__ = [
    "GraphView", "ModelParams", "TrainConfig",
    "corrupt", "dgi_loss", "discriminate", "forward", "loss_and_grads",
    "prelu", "readout", "sage_aggregate",
    "view_from_graph", "view_from_subgraph", "train", "embed_all",
]
