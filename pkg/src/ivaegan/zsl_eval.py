"""Final zero-shot classifier and the T1 / U / S / H metric suite."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .numkit import as_matrix, iter_minibatches, make_rng, spawn_rngs
from .regress import RegressorModel, regress, regressor_hidden
from .ver import VerModel

log = logging.getLogger(__name__)

TZSL, TGZSL = "TZSL", "TGZSL"


class EvaluationError(RuntimeError):
    pass


@dataclass
class ClassifierConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.0
    seed: int = 0


@dataclass(eq=False)
class SoftmaxClassifier:
    """Single linear layer over standardised multimodal inputs.

    ``class_map[k]`` is the global class id of output unit k.
    """

    W: np.ndarray
    b: np.ndarray
    class_map: np.ndarray
    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        cm = np.asarray(self.class_map, dtype=np.int64)
        if len(set(cm.tolist())) != len(cm):
            raise ValueError("class_map has duplicate class ids")
        self.class_map = cm

    def logits(self, Z: np.ndarray) -> np.ndarray:
        return ((Z - self.shift) / self.scale) @ self.W.T + self.b

    def predict(self, Z: np.ndarray) -> np.ndarray:
        return self.class_map[np.argmax(self.logits(Z), axis=1)]


@dataclass
class EvalReport:
    """Accuracies are fractions in [0, 1]; ``classes`` orders ``per_class_acc`` and the confusion axes."""

    mode: str
    T1: float
    per_class_acc: list[float]
    classes: list[int]
    confusion: list[list[int]]
    U: float | None = None
    S: float | None = None
    H: float | None = None
    excluded_classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def multimodal_input(x, reg: RegressorModel, ver: VerModel | None) -> np.ndarray:
    """``[x | R(x) | hidden_R(x)]``."""
    x = as_matrix(x)
    return np.hstack([x, regress(reg, ver, x), regressor_hidden(reg, ver, x)])


def _softmax_xent(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    n = len(y)
    loss = -float(np.mean(np.log(p[np.arange(n), y] + 1e-300)))
    p[np.arange(n), y] -= 1.0
    return loss, p / n


def fit_softmax(Z: np.ndarray, y_idx: np.ndarray, class_map, cfg: ClassifierConfig) -> SoftmaxClassifier:
    """Cross-entropy training with AdamW; ``y_idx`` indexes ``class_map``."""
    rng_init, rng_batch = spawn_rngs(cfg.seed, 2)
    shift = Z.mean(axis=0, keepdims=True)
    scale = Z.std(axis=0, keepdims=True)
    scale[scale < 1e-8] = 1.0
    Zn = (Z - shift) / scale
    k, d = len(class_map), Z.shape[1]
    W = rng_init.normal(0.0, 0.01, size=(k, d))
    b = np.zeros((1, k))
    mW, vW, mb, vb = np.zeros_like(W), np.zeros_like(W), np.zeros_like(b), np.zeros_like(b)
    step = 0
    for _ in range(cfg.epochs):
        for idx in iter_minibatches(len(Zn), cfg.batch_size, rng_batch):
            _, dlog = _softmax_xent(Zn[idx] @ W.T + b, y_idx[idx])
            gW, gb = dlog.T @ Zn[idx], dlog.sum(axis=0, keepdims=True)
            step += 1
            for w, g, m, v in ((W, gW, mW, vW), (b, gb, mb, vb)):
                m *= cfg.beta1
                m += (1 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1 - cfg.beta2) * g * g
                if cfg.weight_decay:
                    w *= 1 - cfg.lr * cfg.weight_decay
                w -= cfg.lr * (m / (1 - cfg.beta1**step)) / (np.sqrt(v / (1 - cfg.beta2**step)) + 1e-8)
    return SoftmaxClassifier(W, b, np.asarray(class_map), shift, scale)


def train_fzsl(gen, reg: RegressorModel, ver: VerModel | None, ds, n_syn: int, mode: str = TZSL,
               cfg: ClassifierConfig | None = None) -> SoftmaxClassifier:
    """Train f_zsl on ``n_syn`` synthesized features per unseen class (plus real seen features in TGZSL)."""
    from .fgen import synthesize

    cfg = cfg or ClassifierConfig()
    if n_syn < 1:
        raise EvaluationError("n_syn must be >= 1: the classifier needs synthesized unseen features")
    if mode not in (TZSL, TGZSL):
        raise EvaluationError(f"unknown mode {mode!r}")
    N_u = ds.Au.shape[0]
    fake = synthesize(gen, ds.Au, n_syn, make_rng(cfg.seed + 7919))
    X_parts = [fake]
    if mode == TZSL:
        class_map = np.asarray(ds.unseen_classes)
        y_parts = [np.repeat(np.arange(N_u), n_syn)]
    else:
        if getattr(ds, "Xs_test", None) is None:
            raise EvaluationError("TGZSL mode needs a held-out seen test split (see holdout_seen)")
        N_s = ds.As.shape[0]
        class_map = np.concatenate([ds.seen_classes, ds.unseen_classes])
        X_parts.append(ds.Xs)
        y_parts = [N_s + np.repeat(np.arange(N_u), n_syn), ds.Ys]
    X = np.vstack(X_parts)
    y = np.concatenate(y_parts)
    return fit_softmax(multimodal_input(X, reg, ver), y, class_map, cfg)


def top1_per_class(preds, labels, classes) -> tuple[float, np.ndarray]:
    """Macro-averaged top-1 accuracy.

    Classes with no test sample are excluded from the mean (with a warning);
    their entry in the returned vector is NaN.
    """
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    classes = np.asarray(classes)
    if labels.size and not np.all(np.isin(labels, classes)):
        raise EvaluationError("labels outside the evaluation classes")
    acc = np.full(len(classes), np.nan)
    for k, c in enumerate(classes):
        mask = labels == c
        if mask.any():
            acc[k] = float(np.mean(preds[mask] == c))
    missing = classes[np.isnan(acc)]
    if len(missing):
        log.warning("classes absent from the test split, excluded from T1: %s", missing.tolist())
    present = acc[~np.isnan(acc)]
    return (float(present.mean()) if present.size else float("nan")), acc


def harmonic_mean(U: float, S: float) -> float:
    return 0.0 if U + S == 0 else 2.0 * U * S / (U + S)


def _confusion(preds, labels, classes) -> list[list[int]]:
    pos = {int(c): i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(preds, labels):
        cm[pos[int(t)], pos[int(p)]] += 1
    return cm.tolist()


def evaluate(clf: SoftmaxClassifier, reg: RegressorModel, ver: VerModel | None, ds, mode: str = TZSL) -> EvalReport:
    """Score the classifier on the unseen pool (hidden labels) and, in TGZSL, the seen holdout."""
    if ds.Yu_hidden is None:
        raise EvaluationError("evaluation unavailable: dataset carries no hidden unseen labels")
    yu = ds.unseen_classes[ds.Yu_hidden]
    pred_u = clf.predict(multimodal_input(ds.Xu, reg, ver))
    if mode == TZSL:
        classes = np.asarray(ds.unseen_classes)
        t1, acc = top1_per_class(pred_u, yu, classes)
        return EvalReport(mode, t1, acc.tolist(), classes.tolist(), _confusion(pred_u, yu, classes),
                          excluded_classes=classes[np.isnan(acc)].tolist())
    if ds.Xs_test is None:
        raise EvaluationError("TGZSL evaluation needs a held-out seen test split")
    ys = ds.seen_classes[ds.Ys_test]
    pred_s = clf.predict(multimodal_input(ds.Xs_test, reg, ver))
    U, acc_u = top1_per_class(pred_u, yu, ds.unseen_classes)
    S, acc_s = top1_per_class(pred_s, ys, ds.seen_classes)
    classes = np.concatenate([ds.seen_classes, ds.unseen_classes])
    acc = np.concatenate([acc_s, acc_u])
    cm = _confusion(np.concatenate([pred_s, pred_u]), np.concatenate([ys, yu]), classes)
    return EvalReport(mode, U, acc.tolist(), classes.tolist(), cm, U=U, S=S, H=harmonic_mean(U, S),
                      excluded_classes=classes[np.isnan(acc)].tolist())
