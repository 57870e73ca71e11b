"""Novel-class branch trained session by session.

The branch starts as a copy of the base backbone with its leading layers
frozen and grows a linear head by ``N`` outputs per session. Training mixes
cross-entropy, sigmoid distillation against the previous session's
snapshot, and an optional pairwise metric loss on Poincare distances.
Prediction uses nearest-mean-of-exemplars over a herding-selected memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffmath as dm
from .backbone import LOG_SCALE, HyperbolicHead, embed, freeze_prefix, layer_names, to_hyperbolic
from .diffmath import DiffValue, ParameterStore, backward_grad, sgd_step
from .errors import ContractError, LabelError, ProtocolError, ShapeError
from .hyperbolic import poincare_distance

HEAD_W = "head.W"
HEAD_B = "head.b"
TIE_TOL = 1e-12


@dataclass(frozen=True)
class IncrementalLossConfig:
    tau: float = 1.0
    eta: float = 1.0
    zeta_base: float = 1.0
    pairs_per_epoch: int = None  # None: use the training batch size
    exemplar_budget: int = 5
    nme_space: str = "euclidean"

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractError("tau must be > 0")
        if self.eta < 0 or self.zeta_base < 0:
            raise ContractError("eta and zeta_base must be >= 0")
        if self.pairs_per_epoch is not None and self.pairs_per_epoch < 1:
            raise ContractError("pairs_per_epoch must be >= 1")
        if self.exemplar_budget < 1:
            raise ContractError("exemplar_budget must be >= 1")
        if self.nme_space not in ("euclidean", "hyperbolic"):
            raise ContractError("nme_space must be 'euclidean' or 'hyperbolic'")


# losses ------------------------------------------------------------------


def metric_loss_from_distances(dist, pairs, tau):
    """Mean over ordered pairs ``(i, j)`` of ``-log(exp(-D_ij/tau) / sum_{t != i} exp(-D_it/tau))``.

    ``pairs`` lists each ordered pair explicitly; ``dist`` is a (T, T)
    array or :class:`DiffValue`.
    """
    dist = dm.constant(dist) if not isinstance(dist, DiffValue) else dist
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    anchors, positives = pairs[:, 0], pairs[:, 1]
    t = dist.shape[0]
    mask = np.arange(t)[None, :] != anchors[:, None]
    scaled = dist[anchors] * (-1.0 / tau)
    per_pair = dist[anchors, positives] / tau + dm.logsumexp(scaled, axis=-1, mask=mask)
    return per_pair.mean()


def ordered_pairs(t):
    """Both orderings of the consecutive pairs (0,1), (2,3), ... of a batch of size ``t``."""
    first = np.arange(0, t, 2)
    return np.concatenate([np.stack([first, first + 1], 1), np.stack([first + 1, first], 1)])


def pairwise_poincare(points, ball):
    """(T, T) matrix of Poincare distances between rows of ``points``."""
    t, d = points.shape
    return poincare_distance(points.reshape(t, 1, d), points.reshape(1, t, d), ball)


def hyper_metric_loss(embeddings, head, cfg):
    """Pairwise metric loss on the ball for a batch laid out as positive pairs.

    Rows ``2m`` and ``2m + 1`` of ``embeddings`` form the m-th positive pair.
    """
    t = embeddings.shape[0]
    if t < 2 or t % 2:
        raise ContractError(f"metric batch needs an even number >= 2 of samples, got {t}")
    dist = pairwise_poincare(to_hyperbolic(embeddings, head), head.ball)
    return metric_loss_from_distances(dist, ordered_pairs(t), cfg.tau)


def cross_entropy_loss(logits, labels):
    """Batch-mean softmax cross-entropy; ``labels`` index the logit columns."""
    logits = logits if isinstance(logits, DiffValue) else dm.constant(logits)
    labels = np.asarray(labels, dtype=int)
    single = logits.ndim == 1
    if single:
        logits = logits.reshape(1, -1)
        labels = labels.reshape(1)
    if np.any((labels < 0) | (labels >= logits.shape[1])):
        raise LabelError(f"label outside 0..{logits.shape[1] - 1}")
    logp = dm.log_softmax(logits, axis=-1)
    return -logp[np.arange(len(labels)), labels].mean()


def distillation_loss(new_logits, old_logits, old_class_count):
    """Sigmoid binary cross-entropy on the first ``old_class_count`` logits.

    The old model's sigmoid outputs are the soft targets. Summed over those
    logits and averaged over the batch.
    """
    new_logits = new_logits if isinstance(new_logits, DiffValue) else dm.constant(new_logits)
    old_logits = np.asarray(old_logits, dtype=np.float64)
    if new_logits.ndim == 1:
        new_logits = new_logits.reshape(1, -1)
        old_logits = old_logits.reshape(1, -1)
    if old_class_count > min(new_logits.shape[-1], old_logits.shape[-1]):
        raise ShapeError("old_class_count exceeds the available logits")
    if new_logits.shape[0] != old_logits.shape[0]:
        raise ShapeError("new and old logits cover different batch sizes")
    if old_class_count == 0:
        return dm.constant(0.0)
    z = new_logits[:, :old_class_count]
    target = dm._np_sigmoid(old_logits[:, :old_class_count])
    # BCE(sigmoid(z), t) = t * softplus(-z) + (1 - t) * softplus(z)
    per_logit = target * dm.softplus(-z) + (1.0 - target) * dm.softplus(z)
    return per_logit.sum(axis=-1).mean()


def adaptive_zeta(old_count, new_count, zeta_base):
    """Distillation weight ``zeta_base * sqrt(old / new)``, zero with no old classes."""
    if new_count < 1:
        raise ContractError("new_count must be >= 1")
    if old_count == 0:
        return 0.0
    return zeta_base * float(np.sqrt(old_count / new_count))


def combine_losses(ce, dl, metric, zeta, eta):
    """``ce + zeta * dl + eta * metric``."""
    return ce + zeta * dl + eta * metric


@dataclass
class IncrementalBatch:
    """Normalized inputs with head-column labels, plus an optional pair-structured metric batch."""

    x: np.ndarray
    labels: np.ndarray
    metric_x: np.ndarray = None


def novel_logits(params, x, backbone_cfg):
    feats = embed(x, params, backbone_cfg)
    return feats @ params[HEAD_W] + params[HEAD_B]


def incremental_loss(params, batch, cfg, backbone_cfg, ball, old_params=None, old_class_count=0):
    """Composite novel-branch loss for one minibatch.

    The distillation term is active when a snapshot and old classes exist;
    the metric term when ``batch.metric_x`` is given and ``cfg.eta > 0``.
    """
    logits = novel_logits(params, batch.x, backbone_cfg)
    total = cross_entropy_loss(logits, batch.labels)
    new_count = logits.shape[1] - old_class_count
    if old_params is not None and old_class_count > 0:
        old = novel_logits(old_params, batch.x, backbone_cfg).value
        zeta = adaptive_zeta(old_class_count, new_count, cfg.zeta_base)
        total = total + zeta * distillation_loss(logits, old, old_class_count)
    if batch.metric_x is not None and cfg.eta > 0:
        feats = embed(batch.metric_x, params, backbone_cfg)
        head = HyperbolicHead(ball, params[LOG_SCALE])
        total = total + cfg.eta * hyper_metric_loss(feats, head, cfg)
    return total


# exemplar memory and NME -------------------------------------------------


def herding_select(embeddings, class_mean, budget):
    """Greedy herding: indices whose running mean tracks ``class_mean``.

    Ties go to the lowest sample index.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim == 1:
        emb = emb[:, None]
    if budget < 1 or len(emb) == 0:
        raise ContractError("herding needs budget >= 1 and at least one sample")
    mu = np.asarray(class_mean, dtype=np.float64).reshape(-1)
    chosen = []
    running = np.zeros_like(mu)
    available = np.ones(len(emb), dtype=bool)
    for step in range(1, min(budget, len(emb)) + 1):
        gaps = np.linalg.norm(mu - (running + emb) / step, axis=1)
        gaps[~available] = np.inf
        # gaps equal up to rounding count as ties
        best = gaps.min()
        pick = int(np.flatnonzero(gaps <= best + TIE_TOL * max(1.0, best))[0])
        chosen.append(pick)
        available[pick] = False
        running = running + emb[pick]
    return chosen


@dataclass
class ExemplarMemory:
    """Per-class exemplars in herding order: (raw sample, cached embedding) pairs."""

    budget: int = 5
    store: dict = field(default_factory=dict)

    def add_class(self, cls, samples, embeddings):
        samples = np.asarray(samples, dtype=np.float64)
        embeddings = np.asarray(embeddings, dtype=np.float64)
        order = herding_select(embeddings, embeddings.mean(axis=0), self.budget)
        self.store[int(cls)] = [(samples[i].copy(), embeddings[i].copy()) for i in order]

    @property
    def classes(self):
        return sorted(self.store)

    def samples(self, cls):
        return np.array([s for s, _ in self.store[cls]])

    def replay(self):
        """All stored raw samples and their class ids."""
        xs, ys = [], []
        for cls in self.classes:
            for s, _ in self.store[cls]:
                xs.append(s)
                ys.append(cls)
        return np.array(xs), np.array(ys, dtype=int)

    def __len__(self):
        return sum(len(v) for v in self.store.values())


def class_means(memory, embed_fn):
    """Mean embedding of each class's exemplars under the current backbone.

    ``embed_fn`` maps a (n, input_dim) array of raw samples to embeddings.
    """
    means = {}
    for cls in memory.classes:
        if not memory.store[cls]:
            raise ContractError(f"class {cls} has no exemplars")
        means[cls] = np.asarray(embed_fn(memory.samples(cls))).mean(axis=0)
    return means


def nme_classify(features, means, head=None):
    """Class id of the nearest mean; ties resolve to the lowest id.

    Distances are Euclidean unless ``head`` is given, in which case both
    ends are mapped onto the ball first.
    """
    if not means:
        raise ContractError("no class means")
    ids = sorted(means)
    centers = np.array([means[c] for c in ids])
    feats = np.asarray(features, dtype=np.float64)
    single = feats.ndim == 1
    feats = np.atleast_2d(feats)
    if head is None:
        dist = np.linalg.norm(feats[:, None, :] - centers[None], axis=-1)
    else:
        dist = poincare_distance(
            to_hyperbolic(feats, head)[:, None, :], to_hyperbolic(centers, head)[None], head.ball
        )
    best = dist.min(axis=1, keepdims=True)
    nearest = np.argmax(dist <= best + TIE_TOL * np.maximum(1.0, best), axis=1)
    out = np.asarray(ids)[nearest]
    return int(out[0]) if single else out


# session training --------------------------------------------------------


def _new_branch(state, seed):
    cfg = state.train
    store = ParameterStore(
        base_lr=cfg.incremental_lr,
        milestones=list(cfg.incremental_milestones),
        weight_decay=cfg.weight_decay,
        momentum=cfg.momentum,
        max_grad_norm=cfg.max_grad_norm,
    )
    for layer in range(state.backbone.num_layers):
        for name in layer_names(layer):
            store[name] = state.base_params[name].value.copy()
    store[LOG_SCALE] = state.base_params[LOG_SCALE].value.copy()
    store[HEAD_W] = np.zeros((state.backbone.embed_dim, 0))
    store[HEAD_B] = np.zeros(0)
    freeze_prefix(store, state.backbone)
    return store


def _sample_pairs(y, n_pairs, rng):
    """Indices laid out as consecutive positive pairs drawn from random classes."""
    classes = np.unique(y)
    rows = []
    for cls in rng.choice(classes, size=n_pairs):
        members = np.flatnonzero(y == cls)
        replace = len(members) < 2
        rows.extend(rng.choice(members, size=2, replace=replace))
    return np.asarray(rows, dtype=int)


def metric_active(state, session, epoch):
    cfg = state.train
    return session >= cfg.metric_start_session and epoch >= cfg.metric_start_epoch


def embed_novel(state, x, params=None):
    params = state.novel_params if params is None else params
    return embed(state.normalize(x), params, state.backbone).value


def train_incremental_session(x, y, state, session, seed, replay=True):
    """Train the novel branch on one N-way K-shot session and update its memory.

    ``session`` is the 1-based session number (the base session is 1).
    ``replay=False`` drops stored exemplars from training (ablation only).
    """
    y = np.asarray(y, dtype=int)
    x = np.asarray(x, dtype=np.float64)
    new_classes = sorted(set(y.tolist()))
    overlap = sorted(set(new_classes) & set(state.seen_classes))
    if overlap:
        raise ProtocolError(f"session {session} reuses classes {overlap}")
    cfg, inc = state.train, state.incremental
    rng = np.random.default_rng([seed, session, 3])

    if state.novel_params is None:
        state.novel_params = _new_branch(state, seed)
        state.memory = ExemplarMemory(inc.exemplar_budget)
    params = state.novel_params

    old_count = len(state.novel_classes)
    state.old_params = params.copy() if old_count else None
    state.old_class_count = old_count
    if state.old_params is not None:
        state.old_params.frozen.update(state.old_params)

    d = state.backbone.embed_dim
    params[HEAD_W] = np.concatenate(
        [params[HEAD_W].value, rng.normal(0.0, np.sqrt(2.0 / d), size=(d, len(new_classes)))], axis=1
    )
    params[HEAD_B] = np.concatenate([params[HEAD_B].value, np.zeros(len(new_classes))])
    state.novel_classes = state.novel_classes + new_classes
    state.sessions.append(list(new_classes))

    train_x, train_y = x, y
    if replay and len(state.memory):
        rx, ry = state.memory.replay()
        train_x = np.concatenate([x, rx])
        train_y = np.concatenate([y, ry])
    column = {c: i for i, c in enumerate(state.novel_classes)}
    labels = np.array([column[c] for c in train_y], dtype=int)
    xn = state.normalize(train_x)
    n_pairs = inc.pairs_per_epoch or cfg.batch_size

    history = []
    for epoch in range(cfg.incremental_epochs):
        metric_x = None
        if metric_active(state, session, epoch) and inc.eta > 0:
            metric_x = xn[_sample_pairs(labels, n_pairs, rng)]
        order = rng.permutation(len(labels))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = IncrementalBatch(xn[idx], labels[idx], metric_x)
            loss = incremental_loss(
                params, batch, inc, state.backbone, state.ball, state.old_params, old_count
            )
            backward_grad(loss)
            sgd_step(params, epoch)
            total += float(loss.value) * len(idx)
        history.append(total / len(labels))
    state.novel_loss_history.append(history)

    for cls in new_classes:
        members = x[y == cls]
        state.memory.add_class(cls, members, embed_novel(state, members))
    return state


def novel_means(state):
    return class_means(state.memory, lambda raw: embed_novel(state, raw))


def novel_predict(state, x):
    """NME prediction of the novel branch for raw inputs ``x``."""
    feats = embed_novel(state, x)
    head = None
    if state.incremental.nme_space == "hyperbolic":
        head = HyperbolicHead(state.ball, float(state.novel_params[LOG_SCALE].value))
    return nme_classify(feats, novel_means(state), head)
