"""Adversary toolbox: data and model poisoning, collusion, gradient-matching inference.

The inference attack matches a dummy sample's gradient to an observed
gradient. Its score, GML, is the relative L2 mismatch
``||g_dummy - g_true|| / ||g_true||``; 0.15 or more counts as no leakage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .he import CiphertextVector
from .model import Architecture, LocalDataset, gradient

LABEL_FLIP = "label_flip"
NOISE_INJECT = "noise_inject"
SIGN_FLIP = "sign_flip"
SCALE = "scale"
COLLUDE = "collude"
ATTACK_KINDS = (LABEL_FLIP, NOISE_INJECT, SIGN_FLIP, SCALE, COLLUDE)
DATA_KINDS = (LABEL_FLIP, NOISE_INJECT)
MODEL_KINDS = (SIGN_FLIP, SCALE)

GML_THRESHOLD = 0.15
NO_LEAK = "no_leak"
ARTIFACT_LEAK = "artifact_leak"
DEEP_LEAK = "deep_leak"
# below this the reconstruction is treated as a deep leak
DEEP_LEAK_BELOW = 0.05
# logit boost given to the label read off the bias gradient
LABEL_PRIOR = 4.0
# small dummy inputs start the search away from softmax saturation
DUMMY_INPUT_SCALE = 0.1


@dataclass(frozen=True)
class AttackConfig:
    kind: str = SIGN_FLIP
    rate: float = 0.2
    scale_factor: float = 1.0
    collusion_group: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ContractError(f"unknown attack kind {self.kind!r}")
        if not 0 <= self.rate < 1:
            raise ContractError("attack rate must be in [0, 1)")
        if self.scale_factor == 0 or not math.isfinite(self.scale_factor):
            raise ContractError("scale_factor must be finite and non-zero")


@dataclass(frozen=True)
class GmlReport:
    gml: float
    steps: int
    leak_class: str


def classify_gml(gml: float) -> str:
    if gml >= GML_THRESHOLD:
        return NO_LEAK
    return DEEP_LEAK if gml < DEEP_LEAK_BELOW else ARTIFACT_LEAK


def pick_attackers(enterprise_ids, rate: float, seed) -> list[int]:
    """Choose ``round(rate * n)`` malicious enterprise ids, reproducibly."""
    ids = sorted(int(i) for i in enterprise_ids)
    k = int(round(rate * len(ids)))
    if k == 0:
        return []
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA77AC4]))
    return sorted(ids[i] for i in rng.choice(len(ids), size=k, replace=False))


def poison_data(dataset: LocalDataset, kind: str, rate: float, seed, class_count=None) -> LocalDataset:
    """Corrupt ``ceil(rate * n)`` samples.

    ``label_flip`` moves each chosen label to the next class (a binary flip for
    two classes); ``noise_inject`` adds Gaussian noise at five times the
    per-feature standard deviation.
    """
    if kind not in DATA_KINDS:
        raise ContractError(f"{kind!r} is not a data-poisoning attack")
    if not 0 <= rate <= 1:
        raise ContractError("poison rate must be in [0, 1]")
    n = dataset.size
    count = min(n, math.ceil(rate * n - 1e-9))
    x = dataset.features.copy()
    y = dataset.labels.copy()
    if count == 0:
        return LocalDataset(x, y, dataset.data_type, dict(dataset.meta))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=count, replace=False))
    if kind == LABEL_FLIP:
        c = int(class_count if class_count is not None else max(2, int(y.max()) + 1))
        y[chosen] = (y[chosen] + 1) % c
    else:
        sd = x.std(axis=0) if n > 1 else np.ones(x.shape[1])
        x[chosen] += rng.normal(size=(count, x.shape[1])) * (5.0 * sd)
    meta = dict(dataset.meta, poisoned=chosen.tolist())
    return LocalDataset(x, y, dataset.data_type, meta)


def poison_model(params, kind: str, scale_factor: float = 1.0) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if not np.all(np.isfinite(params)):
        raise ContractError("cannot poison a non-finite vector")
    if kind == SIGN_FLIP:
        return -params
    if kind == SCALE:
        return scale_factor * params
    raise ContractError(f"{kind!r} is not a model-poisoning attack")


def collude(group_updates: dict, crafted) -> dict:
    """Replace every group member's submission by the same crafted vector."""
    if not group_updates:
        raise ContractError("collusion group is empty")
    crafted = np.asarray(crafted, dtype=np.float64)
    return {k: crafted.copy() for k in group_updates}


def undefended_mix(honest, intruder, mu: float) -> np.ndarray:
    """Size-weighted mean with intruders holding a ``mu`` share of the data mass."""
    if not 0 <= mu <= 1:
        raise ContractError("mu must be in [0, 1]")
    return (1.0 - mu) * np.asarray(honest, dtype=np.float64) + mu * np.asarray(intruder, dtype=np.float64)


# ------------------------------------------------------------ gradient matching

def sample_gradient(params, arch: Architecture, x, y) -> np.ndarray:
    """Gradient of one labelled sample; the observation a leakage attacker targets."""
    data = LocalDataset(np.atleast_2d(np.asarray(x, dtype=np.float64)), np.atleast_1d(int(y)))
    return gradient(params, arch, data)


def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _dummy_grad(w, b, x, ell):
    p = _softmax(w @ x + b)
    yhat = _softmax(ell)
    e = p - yhat
    return e, p, yhat


def _match(w, b, gw, gb, x, ell, norm2):
    """Normalized matching loss and its gradients in the dummy input and label logits."""
    e, p, yhat = _dummy_grad(w, b, x, ell)
    d_w = np.outer(e, x) - gw
    d_b = e - gb
    val = (np.sum(d_w * d_w) + np.sum(d_b * d_b)) / norm2
    u = d_w @ x + d_b
    jp = np.diag(p) - np.outer(p, p)
    jy = np.diag(yhat) - np.outer(yhat, yhat)
    gx = 2.0 * (d_w.T @ e + w.T @ (jp @ u)) / norm2
    gl = -2.0 * (jy @ u) / norm2
    return val, gx, gl


def gml_attack(target, arch: Architecture, params=None, steps: int = 500, seed=0,
               lr: float = 0.1, reference=None) -> GmlReport:
    """Gradient-matching inference against a linear softmax model.

    ``target`` is the observed gradient, either a plaintext vector or a
    :class:`CiphertextVector`. ``params`` are the model weights the gradient
    was taken at. A ciphertext offers no optimization signal, so no step is
    taken. Its score is then the seeded dummy's mismatch against ``reference``
    (the true plaintext, known to the evaluator only), or 1.0, the mismatch of
    the uninformed zero estimate, when no reference is given. Either way it is
    clamped to at least the no-leak threshold.
    """
    if arch.hidden_dim != 0:
        raise ContractError("gradient matching is implemented for the linear architecture")
    if steps < 0:
        raise ContractError("steps must be non-negative")
    if params is None:
        raise ContractError("the attacker needs the model weights the gradient was taken at")
    c, f = arch.class_count, arch.input_dim
    params = np.asarray(params, dtype=np.float64)
    w, b = params[: c * f].reshape(c, f), params[c * f:]
    rng = np.random.default_rng(seed)
    x = DUMMY_INPUT_SCALE * rng.normal(size=f)
    ell = rng.normal(size=c)

    if isinstance(target, CiphertextVector):
        if reference is None:
            gml = 1.0
        else:
            ref = np.asarray(reference, dtype=np.float64)
            gml = _relative_mismatch(w, b, ref, x, ell)
        gml = max(GML_THRESHOLD, gml)
        return GmlReport(gml, 0, classify_gml(gml))

    true = np.asarray(target, dtype=np.float64).ravel()
    if true.shape[0] != arch.n_params:
        raise ContractError("target gradient does not match the architecture")
    gw, gb = true[: c * f].reshape(c, f), true[c * f:]
    norm2 = float(true @ true)
    if norm2 == 0:
        return GmlReport(0.0, 0, classify_gml(0.0))
    # only the true class has a negative bias gradient; start the dummy label there
    ell[int(np.argmin(gb))] += LABEL_PRIOR
    val, gx, gl = _match(w, b, gw, gb, x, ell, norm2)
    best = val
    for _ in range(steps):
        x = x - lr * gx
        ell = ell - lr * gl
        val, gx, gl = _match(w, b, gw, gb, x, ell, norm2)
        best = min(best, val)
    gml = math.sqrt(best)
    return GmlReport(gml, steps, classify_gml(gml))


def _relative_mismatch(w, b, ref, x, ell) -> float:
    e, _, _ = _dummy_grad(w, b, x, ell)
    g = np.concatenate([np.outer(e, x).ravel(), e])
    nr = np.linalg.norm(ref)
    return float(np.linalg.norm(g - ref) / nr) if nr > 0 else 1.0
