# -*- coding: utf-8 -*-
"""
Losses - cross-entropy, temperature distillation and the contrastive
distillation regularizer, each with its gradient w.r.t. the logits
"""

from dataclasses import dataclass

import numpy as np

from services.errors import DomainError
from services.numkit import DTYPE, as_matrix, log_softmax, softmax


@dataclass
class LossBreakdown:
    """L_T = L_C + R and dL_T/dlogits"""

    cross_entropy: float
    regularizer: float
    total: float
    grad_wrt_logits: np.ndarray

    def to_dict(self):
        return {
            'cross_entropy': self.cross_entropy,
            'regularizer': self.regularizer,
            'total': self.total,
        }


def cross_entropy(logits, labels):
    """Mean multi-class cross-entropy against integer labels

    Returns (value, grad) with grad = (softmax(logits) − onehot) / N.
    """
    logits = as_matrix(logits, "logits")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, width = logits.shape
    if labels.shape[0] != n:
        raise DomainError(f"{n} logit rows but {labels.shape[0]} labels")
    bad = np.flatnonzero((labels < 0) | (labels >= width))
    if bad.size:
        row = int(bad[0])
        raise DomainError(f"label {int(labels[row])} on row {row} is outside the {width} output units")
    if n == 0:
        return 0.0, np.zeros_like(logits)

    log_q = log_softmax(logits)
    rows = np.arange(n)
    value = float(-np.mean(log_q[rows, labels]))
    grad = np.exp(log_q)
    grad[rows, labels] -= 1.0
    grad /= n
    return value, grad


def distill_probs(logits_slice, temperature):
    """Row-wise softmax at temperature T"""
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    return softmax(as_matrix(logits_slice, "logits"), temperature, axis=1)


def contrastive_distillation(teacher_probs, student_probs):
    """Softmax-over-products regularizer

    With a_ij = p′_ij · q′_ij (teacher times student probability of old class j),
    R = −(1/N) Σ_i Σ_j log softmax_j(a_i)_j. Teacher probabilities are constants.
    Returns (value, dR/d student_probs).
    """
    p = as_matrix(teacher_probs, "teacher_probs")
    q = as_matrix(student_probs, "student_probs")
    if p.shape != q.shape:
        raise DomainError(f"teacher shape {p.shape} differs from student shape {q.shape}")
    n, width = p.shape
    if n == 0 or width == 0:
        return 0.0, np.zeros_like(q)
    for name, probs in (("teacher", p), ("student", q)):
        sums = probs.sum(axis=1)
        off = np.flatnonzero(np.abs(sums - 1.0) > 1e-6)
        if off.size:
            raise DomainError(f"{name} row {int(off[0])} is not a probability vector "
                              f"(sum = {sums[off[0]]!r})")

    products = p * q
    row_max = products.max(axis=1, keepdims=True)
    exp = np.exp(products - row_max)
    lse = row_max[:, 0] + np.log(exp.sum(axis=1))
    # Σ_j [lse_i − a_ij] = P·lse_i − Σ_j a_ij
    value = float(np.sum(width * lse - products.sum(axis=1)) / n)
    inner = exp / exp.sum(axis=1, keepdims=True)
    grad_products = (width * inner - 1.0) / n
    return value, grad_products * p


def _softmax_backward(probs, grad_probs, temperature):
    """Chain dL/dq through q = softmax(z / T) to dL/dz"""
    dot = np.sum(grad_probs * probs, axis=1, keepdims=True)
    return probs * (grad_probs - dot) / temperature


def total_loss(student_logits, labels, teacher_old_logits, old_class_count, temperature,
               regularizer_weight=1.0):
    """L_T = L_C over every output unit + R over the first P (old) units"""
    z = as_matrix(student_logits, "student_logits")
    n, width = z.shape
    old = int(old_class_count)
    if old < 0 or old > width:
        raise DomainError(f"old class count {old} exceeds the {width} student outputs")
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")

    ce_value, grad = cross_entropy(z, labels)
    if old == 0:
        return LossBreakdown(ce_value, 0.0, ce_value + 0.0, grad)

    teacher = as_matrix(teacher_old_logits, "teacher_old_logits", cols=old)
    if teacher.shape != (n, old):
        raise DomainError(f"teacher logits shape {teacher.shape}, expected {(n, old)}")

    teacher_probs = distill_probs(teacher, temperature)
    student_probs = distill_probs(z[:, :old], temperature)
    reg_value, grad_q = contrastive_distillation(teacher_probs, student_probs)
    reg_value *= regularizer_weight
    grad = grad.copy()
    grad[:, :old] += regularizer_weight * _softmax_backward(student_probs, grad_q, temperature)
    return LossBreakdown(ce_value, reg_value, ce_value + reg_value, grad.astype(DTYPE, copy=False))
