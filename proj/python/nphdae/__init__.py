"""Neural port-Hamiltonian DAE models of electrical circuits."""

import json

from ._core import (
    ConfigError,
    Dataset,
    IoError,
    NumericalError,
    Spec,
    System,
    complete_graph_couplings,
    compose,
    dgu,
    evaluate,
    fhn,
    generate_dataset,
    load_dataset,
    tl,
    tl_random,
    train,
)

__all__ = [
    "ConfigError", "Dataset", "IoError", "NumericalError", "Spec", "System",
    "complete_graph_couplings", "compose", "dgu", "evaluate", "fhn",
    "generate_dataset", "load_dataset", "tl", "tl_random", "train",
    "load_model", "save_model",
]


def save_model(path, model_json):
    with open(path, "w") as f:
        f.write(json.dumps(json.loads(model_json), indent=2) + "\n")


def load_model(path):
    with open(path) as f:
        return json.dumps(json.load(f))
