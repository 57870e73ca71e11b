"""Session planning, two-branch prediction and the evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ProtocolError
from .hyper_rpl import UNKNOWN, base_decide, base_probabilities, train_base_session
from .incremental import novel_predict, train_incremental_session

BRANCH_BASE = 0
BRANCH_NOVEL = 1


@dataclass
class SessionPlan:
    """Class assignment and sample indices for a base session plus N-way K-shot sessions."""

    base_classes: list
    sessions: list
    shots: int
    base_train: np.ndarray
    session_train: list
    test_index: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for group in [self.base_classes, *self.sessions]:
            if seen & set(group):
                raise ProtocolError(f"classes {sorted(seen & set(group))} appear in two sessions")
            seen |= set(group)
        ways = {len(s) for s in self.sessions}
        if len(ways) > 1:
            raise ProtocolError("incremental sessions must all have the same number of classes")

    @property
    def num_sessions(self):
        return 1 + len(self.sessions)

    @property
    def all_groups(self):
        return [list(self.base_classes), *map(list, self.sessions)]

    def classes_through(self, session):
        return [c for group in self.all_groups[:session] for c in group]

    def test_indices(self, classes):
        parts = [self.test_index[c] for c in classes]
        return np.concatenate(parts) if parts else np.array([], dtype=int)


def build_sessions(dataset, base_classes, ways, shots, num_sessions, seed):
    """Assign classes to sessions at random and draw the K training shots per novel class.

    ``num_sessions`` counts incremental sessions only.
    """
    classes = dataset.classes
    need = base_classes + ways * num_sessions
    if len(classes) < need:
        raise ProtocolError(
            f"need {need} classes ({base_classes} base + {num_sessions}x{ways}), dataset has {len(classes)}"
        )
    rng = np.random.default_rng([seed, 11])
    order = [int(c) for c in rng.permutation(classes)]
    base = sorted(order[:base_classes])
    sessions = [
        sorted(order[base_classes + i * ways: base_classes + (i + 1) * ways]) for i in range(num_sessions)
    ]
    base_train = np.concatenate([dataset.indices("train", c) for c in base]) if base else np.array([], int)
    session_train = []
    for group in sessions:
        picks = []
        for cls in group:
            pool = dataset.indices("train", cls)
            if len(pool) < shots:
                raise ProtocolError(f"class {cls} has {len(pool)} training samples, {shots} shots required")
            picks.append(np.sort(rng.choice(pool, size=shots, replace=False)))
        session_train.append(np.concatenate(picks))
    test_index = {c: dataset.indices("test", c) for c in base + [c for g in sessions for c in g]}
    return SessionPlan(base, sessions, shots, base_train, session_train, test_index)


def route_predict(state, x):
    """Predictions and the branch that produced each one.

    The base branch answers first; samples it rejects go to the novel
    branch's nearest-mean classifier, or stay ``UNKNOWN`` before any novel
    class exists.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    pred = base_decide(state, x)
    branch = np.full(len(pred), BRANCH_BASE)
    rejected = pred == UNKNOWN
    if state.novel_classes and rejected.any():
        pred = pred.copy()
        pred[rejected] = novel_predict(state, x[rejected])
        branch[rejected] = BRANCH_NOVEL
    return pred, branch


def _accuracy(pred, y):
    if len(y) == 0:
        raise ContractError("no test samples to evaluate")
    return 100.0 * float(np.mean(np.asarray(pred) == np.asarray(y)))


def session_accuracy(state, dataset, plan, session):
    """Percent of test samples from every class seen through ``session`` predicted correctly."""
    idx = plan.test_indices(plan.classes_through(session))
    if len(idx) == 0:
        raise ContractError("no test samples to evaluate")
    pred, _ = route_predict(state, dataset.x[idx])
    return _accuracy(pred, dataset.y[idx])


def novel_accuracy(state, dataset, plan, session):
    """Accuracy restricted to test samples of incremental classes seen so far."""
    if session < 2:
        raise ContractError("novel accuracy is undefined for the base session")
    idx = plan.test_indices([c for g in plan.sessions[: session - 1] for c in g])
    pred, _ = route_predict(state, dataset.x[idx])
    return _accuracy(pred, dataset.y[idx])


def performance_drop(accuracies):
    """First-session accuracy minus last-session accuracy."""
    if len(accuracies) == 0:
        raise ContractError("need at least one session")
    return float(accuracies[0]) - float(accuracies[-1])


def average_accuracy(accuracies):
    if len(accuracies) == 0:
        raise ContractError("need at least one session")
    return float(np.mean(np.asarray(accuracies, dtype=np.float64)))


@dataclass
class SessionReport:
    """Per-session accuracies (percent, full precision) and derived metrics."""

    accuracies: list
    novel_accuracies: list
    known_accuracy: float
    unknown_accuracy: float
    closed_set_accuracy: float
    performance_drop: float
    average_accuracy: float
    session_classes: list = field(default_factory=list)
    routing: list = field(default_factory=list)

    @property
    def final_accuracy(self):
        return self.accuracies[-1]

    def rows(self):
        """One dict per session; undefined cells are ``None``."""
        out = []
        for i, acc in enumerate(self.accuracies):
            out.append({
                "session": i + 1,
                "overall_acc": acc,
                "novel_acc": self.novel_accuracies[i],
                "known_acc": self.known_accuracy if i == 0 else None,
                "unknown_acc": self.unknown_accuracy if i == 0 else None,
            })
        return out


@dataclass(frozen=True)
class ModelConfig:
    backbone: object
    ball: object
    rpl: object
    incremental: object
    train: object


def _snapshot(store):
    return {k: v.value.copy() for k, v in store.items()}


def _same(a, b):
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def run_protocol(dataset, plan, model_cfg, seed, replay=True, keep_state=False):
    """Train the base branch, then each incremental session, evaluating after every one.

    Raises :class:`ProtocolError` if the base branch changes after the base
    session, if any prediction is claimed by both branches, or if session
    class sets overlap.
    """
    x, y = dataset.x, dataset.y
    train_idx = plan.base_train
    state = train_base_session(
        x[train_idx], y[train_idx], plan.base_classes, model_cfg.backbone, model_cfg.ball,
        model_cfg.rpl, model_cfg.train, seed, incremental_cfg=model_cfg.incremental,
    )
    base_idx = plan.test_indices(plan.base_classes)
    future = plan.test_indices([c for g in plan.sessions for c in g])
    closed = base_probabilities(state, x[base_idx]).argmax(axis=1)
    closed_acc = _accuracy(np.asarray(plan.base_classes)[closed], y[base_idx])
    known_pred = base_decide(state, x[base_idx])
    known_acc = _accuracy(known_pred, y[base_idx])
    unknown_acc = (
        100.0 * float(np.mean(base_decide(state, x[future]) == UNKNOWN)) if len(future) else None
    )

    accuracies = [session_accuracy(state, dataset, plan, 1)]
    novel_accs = [None]
    routing = [_routing_counts(state, dataset, plan, 1)]
    frozen_base = _snapshot(state.base_params)
    for s, idx in enumerate(plan.session_train, start=2):
        train_incremental_session(x[idx], y[idx], state, s, seed, replay=replay)
        if not _same(frozen_base, _snapshot(state.base_params)):
            raise ProtocolError(f"base branch parameters changed during session {s}")
        accuracies.append(session_accuracy(state, dataset, plan, s))
        novel_accs.append(novel_accuracy(state, dataset, plan, s))
        routing.append(_routing_counts(state, dataset, plan, s))

    groups = [set(g) for g in state.sessions]
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            if groups[i] & groups[j]:
                raise ProtocolError(f"sessions {i + 1} and {j + 1} share classes")

    report = SessionReport(
        accuracies=accuracies,
        novel_accuracies=novel_accs,
        known_accuracy=known_acc,
        unknown_accuracy=unknown_acc,
        closed_set_accuracy=closed_acc,
        performance_drop=performance_drop(accuracies),
        average_accuracy=average_accuracy(accuracies),
        session_classes=[list(g) for g in state.sessions],
        routing=routing,
    )
    return (report, state) if keep_state else report


def _routing_counts(state, dataset, plan, session):
    idx = plan.test_indices(plan.classes_through(session))
    pred, branch = route_predict(state, dataset.x[idx])
    base_n = int(np.sum(branch == BRANCH_BASE))
    novel_n = int(np.sum(branch == BRANCH_NOVEL))
    if base_n + novel_n != len(pred):
        raise ProtocolError("a prediction was not attributed to exactly one branch")
    return {"base": base_n, "novel": novel_n}
