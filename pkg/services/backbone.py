# -*- coding: utf-8 -*-
"""
Backbone - the trainable incremental classifier

A feedforward trunk ends in the penultimate feature layer; one linear
classification head per learned task sits on top of it. Layer weights are
stored as (fan_out, fan_in) and applied as x @ W.T + b.
"""

import copy
import hashlib
import logging
from dataclasses import dataclass, field
from typing import FrozenSet, List, Tuple

import numpy as np

from services.errors import DomainError, ShapeError, StateError
from services.numkit import DTYPE, as_matrix, make_rng

logger = logging.getLogger(__name__)

ACTIVATIONS = ('relu', 'identity')


@dataclass
class DenseLayer:
    """Fully connected layer"""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = 'identity'

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=DTYPE, ndmin=2)
        self.biases = np.array(self.biases, dtype=DTYPE, ndmin=1)
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation '{self.activation}'")
        if self.biases.shape != (self.weights.shape[0],):
            raise ShapeError('layer', f"bias shape {self.biases.shape} does not match "
                                      f"weights {self.weights.shape}")

    @property
    def fan_in(self):
        return self.weights.shape[1]

    @property
    def fan_out(self):
        return self.weights.shape[0]


class IncrementalModel:
    """Shared trunk + growing list of per-task heads"""

    def __init__(self, trunk, heads=None, classes_per_head=None, seed_lineage=None, frozen=False):
        if not trunk:
            raise DomainError("the trunk needs at least one layer")
        self.trunk: List[DenseLayer] = list(trunk)
        self.heads: List[DenseLayer] = list(heads or [])
        for i in range(1, len(self.trunk)):
            if self.trunk[i].fan_in != self.trunk[i - 1].fan_out:
                raise ShapeError(f"trunk[{i}]", f"expects {self.trunk[i].fan_in} inputs, "
                                                f"previous layer gives {self.trunk[i - 1].fan_out}")
        for i, head in enumerate(self.heads):
            if head.fan_in != self.feature_dim:
                raise ShapeError(f"head[{i}]", f"expects {head.fan_in} inputs, "
                                               f"feature layer gives {self.feature_dim}")
        if classes_per_head is None:
            classes_per_head = self.heads[0].fan_out if self.heads else 0
        self.classes_per_head = int(classes_per_head)
        self.seed_lineage: List[int] = list(seed_lineage or [])
        self.frozen = frozen

    @property
    def input_dim(self):
        return self.trunk[0].fan_in

    @property
    def feature_dim(self):
        return self.trunk[-1].fan_out

    @property
    def head_count(self):
        return len(self.heads)

    @property
    def output_dim(self):
        return sum(head.fan_out for head in self.heads)

    def layers(self):
        return self.trunk + self.heads

    def parameters(self):
        """Parameter arrays in canonical order: trunk W,b ... then head W,b ..."""
        params = []
        for layer in self.layers():
            params.extend((layer.weights, layer.biases))
        return params

    def parameter_names(self):
        names = []
        for prefix, group in (('trunk', self.trunk), ('head', self.heads)):
            for i in range(len(group)):
                names.extend((f"{prefix}_{i}_weights", f"{prefix}_{i}_biases"))
        return names

    def copy(self):
        return IncrementalModel(
            [copy.deepcopy(layer) for layer in self.trunk],
            [copy.deepcopy(layer) for layer in self.heads],
            self.classes_per_head, self.seed_lineage, frozen=False)

    def __repr__(self):
        widths = [self.input_dim] + [layer.fan_out for layer in self.trunk]
        return (f"IncrementalModel(trunk={'-'.join(map(str, widths))}, heads={self.head_count}"
                f"x{self.classes_per_head}, frozen={self.frozen})")


@dataclass
class ParameterGradients:
    """Gradients aligned with IncrementalModel.parameters()

    `frozen` holds flat parameter indices the optimizer must leave untouched
    (no update, no weight decay, no moment accumulation).
    """

    trunk: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    heads: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    frozen: FrozenSet[int] = frozenset()

    def arrays(self):
        grads = []
        for dw, db in self.trunk + self.heads:
            grads.extend((dw, db))
        return grads

    def trainable(self):
        """One flag per entry of arrays()"""
        return [i not in self.frozen for i in range(2 * (len(self.trunk) + len(self.heads)))]

    def without_trunk(self):
        """Copy with the trunk frozen (heads-only updates)"""
        trunk_indices = range(2 * len(self.trunk))
        return ParameterGradients(
            [(np.zeros_like(dw), np.zeros_like(db)) for dw, db in self.trunk],
            list(self.heads), self.frozen | frozenset(trunk_indices))


def glorot_uniform(fan_in, fan_out, rng):
    """U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))) in (fan_out, fan_in) layout"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def build_model(input_dim, hidden_units=(64,), feature_dim=128, seed=0):
    """Trunk input → hidden ReLU layers → identity feature layer, no heads yet"""
    widths = [int(input_dim)] + [int(u) for u in hidden_units] + [int(feature_dim)]
    rng = make_rng(seed, 'trunk')
    trunk = []
    for i in range(len(widths) - 1):
        activation = 'relu' if i < len(widths) - 2 else 'identity'
        trunk.append(DenseLayer(glorot_uniform(widths[i], widths[i + 1], rng),
                                np.zeros(widths[i + 1]), activation))
    logger.debug("built trunk %s", '-'.join(map(str, widths)))
    return IncrementalModel(trunk, seed_lineage=[int(seed)])


def expand_head(model, k, seed):
    """New model with one extra k-unit head; existing parameters copied bit-for-bit"""
    if k < 1:
        raise DomainError(f"a head needs at least one unit, got k={k}")
    if model.heads and k != model.classes_per_head:
        raise DomainError(f"heads hold {model.classes_per_head} classes, cannot add one of {k}")
    expanded = model.copy()
    rng = make_rng(seed, 'head')
    expanded.heads.append(DenseLayer(glorot_uniform(model.feature_dim, k, rng), np.zeros(k)))
    expanded.classes_per_head = k
    expanded.seed_lineage.append(int(seed))
    return expanded


def clone_frozen(model):
    """Read-only deep copy, used as the distillation teacher"""
    frozen = model.copy()
    for param in frozen.parameters():
        param.flags.writeable = False
    frozen.frozen = True
    return frozen


def _forward_cache(model, x):
    x = as_matrix(x, "x", cols=model.input_dim)
    if x.shape[1] != model.input_dim:
        raise ShapeError("trunk[0]", f"expects {model.input_dim} input columns, got {x.shape[1]}")
    inputs, pre_activations = [], []
    a = x
    for layer in model.trunk:
        inputs.append(a)
        z = a @ layer.weights.T + layer.biases
        pre_activations.append(z)
        a = np.maximum(z, 0.0) if layer.activation == 'relu' else z
    features = a
    if model.heads:
        logits = np.concatenate([features @ h.weights.T + h.biases for h in model.heads], axis=1)
    else:
        logits = np.zeros((x.shape[0], 0), dtype=DTYPE)
    return features, logits, (inputs, pre_activations)


def forward(model, x):
    """(penultimate features, logits of all heads in head order)"""
    features, logits, _ = _forward_cache(model, x)
    return features, logits


def extract_features(model, x):
    return _forward_cache(model, x)[0]


def predict(model, x):
    """Arg-max output unit per row"""
    _, logits = forward(model, x)
    return np.argmax(logits, axis=1)


def backward(model, x, loss_grad_wrt_logits):
    """Reverse-mode gradients of every parameter"""
    features, logits, (inputs, pre_activations) = _forward_cache(model, x)
    grad = np.asarray(loss_grad_wrt_logits, dtype=DTYPE)
    if grad.shape != logits.shape:
        raise ShapeError("heads", f"upstream gradient shape {grad.shape} does not match "
                                  f"logits {logits.shape}")

    head_grads = []
    grad_features = np.zeros_like(features)
    offset = 0
    for head in model.heads:
        g = grad[:, offset:offset + head.fan_out]
        offset += head.fan_out
        head_grads.append((g.T @ features, g.sum(axis=0)))
        grad_features += g @ head.weights

    trunk_grads = []
    upstream = grad_features
    for layer, a_in, z in zip(reversed(model.trunk), reversed(inputs), reversed(pre_activations)):
        dz = upstream * (z > 0) if layer.activation == 'relu' else upstream
        trunk_grads.append((dz.T @ a_in, dz.sum(axis=0)))
        upstream = dz @ layer.weights
    trunk_grads.reverse()
    return ParameterGradients(trunk_grads, head_grads)


@dataclass
class OptimizerState:
    """SGD or Adam state with decoupled weight decay"""

    method: str = 'adam'
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)
    step_count: int = 0


def make_optimizer(model, method='adam', learning_rate=1e-3, weight_decay=0.0):
    if method not in ('adam', 'sgd'):
        raise DomainError(f"unknown optimizer '{method}'")
    params = model.parameters()
    return OptimizerState(
        method=method, learning_rate=float(learning_rate), weight_decay=float(weight_decay),
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params] if method == 'adam' else [])


def step(state, model, grads):
    """One in-place parameter update; returns (model, state)"""
    if model.frozen:
        raise StateError("frozen model cannot be updated")
    params = model.parameters()
    grad_arrays = grads.arrays()
    if len(grad_arrays) != len(params):
        raise ShapeError("optimizer", f"{len(grad_arrays)} gradients for {len(params)} parameters")
    if len(state.first_moment) != len(params):
        raise ShapeError("optimizer", "moment accumulators are not aligned with the model")

    state.step_count += 1
    lr, decay = state.learning_rate, state.weight_decay
    bias1 = 1.0 - state.beta1 ** state.step_count
    bias2 = 1.0 - state.beta2 ** state.step_count
    for i, (param, grad, trainable) in enumerate(zip(params, grad_arrays, grads.trainable())):
        if grad.shape != param.shape:
            raise ShapeError(model.parameter_names()[i],
                             f"gradient shape {grad.shape} vs parameter {param.shape}")
        if not trainable:
            continue
        if state.method == 'sgd':
            update = grad
        else:
            m, v = state.first_moment[i], state.second_moment[i]
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * grad * grad
            update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        if decay:
            param -= lr * decay * param
        param -= lr * update

    for name, param in zip(model.parameter_names(), params):
        if not np.all(np.isfinite(param)):
            raise DomainError(f"parameter {name} became non-finite after step {state.step_count}")
    return model, state


def model_fingerprint(model):
    """SHA-256 over shapes, activations and raw parameter bytes"""
    digest = hashlib.sha256()
    digest.update(f"{model.classes_per_head}|{model.head_count}".encode())
    for layer in model.layers():
        digest.update(f"{layer.weights.shape}|{layer.activation}".encode())
        digest.update(np.ascontiguousarray(layer.weights).tobytes())
        digest.update(np.ascontiguousarray(layer.biases).tobytes())
    return digest.hexdigest()
