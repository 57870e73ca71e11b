import numpy as np
import pytest

from hyperfscil import protocol
from hyperfscil.config import ExperimentConfig
from hyperfscil.data import FeatureDataset, generate_synthetic
from hyperfscil.errors import ContractError, ProtocolError
from hyperfscil.hyper_rpl import UNKNOWN, evaluate_known_unknown
from hyperfscil.protocol import (
    BRANCH_BASE,
    BRANCH_NOVEL,
    average_accuracy,
    build_sessions,
    novel_accuracy,
    performance_drop,
    route_predict,
    run_protocol,
    session_accuracy,
)

REFERENCE_RUN = [63.55, 62.88, 61.05, 58.13, 55.68, 54.59, 52.93, 50.39, 49.48]

FAST = ExperimentConfig(base_epochs=15, base_milestones=((10, 0.1),), incremental_epochs=10)


@pytest.fixture(scope="module")
def toy():
    return generate_synthetic(10, 30, 10, 8, 8.0, 0)


def _run(dataset, cfg=FAST, sessions=2, **kw):
    plan = build_sessions(dataset, 6, 2, 5, sessions, cfg.seed)
    return plan, run_protocol(dataset, plan, cfg.model_config(dataset.dim), cfg.seed, **kw)


def test_build_sessions_bookkeeping(toy):
    plan = build_sessions(toy, 6, 2, 5, 2, 0)
    assert len(plan.base_classes) == 6
    assert [len(s) for s in plan.sessions] == [2, 2]
    groups = [set(g) for g in plan.all_groups]
    assert set().union(*groups) == set(range(10))
    assert sum(len(g) for g in groups) == 10
    for idx, group in zip(plan.session_train, plan.sessions):
        assert len(idx) == 10
        assert sorted(set(toy.y[idx].tolist())) == group
        assert np.all(toy.split[idx] == "train")


def test_build_sessions_cifar_shape():
    ds = generate_synthetic(100, 6, 1, 2, 1.0, 0)
    plan = build_sessions(ds, 60, 5, 5, 8, 0)
    assert plan.num_sessions == 9
    assert sorted(plan.classes_through(9)) == list(range(100))


def test_build_sessions_deterministic_and_checked(toy):
    a, b = build_sessions(toy, 6, 2, 5, 2, 3), build_sessions(toy, 6, 2, 5, 2, 3)
    assert a.all_groups == b.all_groups
    assert all(np.array_equal(x, y) for x, y in zip(a.session_train, b.session_train))
    with pytest.raises(ProtocolError, match="12"):
        build_sessions(toy, 6, 2, 5, 3, 0)
    with pytest.raises(ProtocolError):
        build_sessions(toy, 6, 2, 40, 2, 0)


def test_metric_examples():
    assert round(performance_drop(REFERENCE_RUN), 2) == 14.07
    assert round(average_accuracy(REFERENCE_RUN), 2) == 56.52
    assert performance_drop([50.0] * 4) == 0.0
    assert performance_drop([71.2]) == 0.0
    assert average_accuracy([50.0] * 3) == 50.0
    assert average_accuracy([0.0, 100.0]) == 50.0


class _Stub:
    """Stand-in state: routing only needs ``novel_classes`` and two patched predictors."""

    novel_classes = [8, 9]


def _patch(monkeypatch, base, novel):
    monkeypatch.setattr(protocol, "base_decide", lambda state, x: np.asarray(base(x)))
    monkeypatch.setattr(protocol, "novel_predict", lambda state, x: np.asarray(novel(x)))


def test_routing_examples(monkeypatch):
    calls = []
    _patch(monkeypatch, lambda x: np.where(x[:, 0] > 0, 3, UNKNOWN), lambda x: calls.append(len(x)) or [9] * len(x))
    pred, branch = route_predict(_Stub(), np.array([[1.0], [2.0]]))
    assert pred.tolist() == [3, 3] and branch.tolist() == [BRANCH_BASE] * 2
    assert calls == []

    pred, branch = route_predict(_Stub(), np.array([[1.0], [-1.0]]))
    assert pred.tolist() == [3, 9]
    assert branch.tolist() == [BRANCH_BASE, BRANCH_NOVEL]

    class Session1:
        novel_classes = []

    pred, branch = route_predict(Session1(), np.array([[-1.0]]))
    assert pred.tolist() == [UNKNOWN] and branch.tolist() == [BRANCH_BASE]


def _plan_fixture():
    x = np.arange(8, dtype=float).reshape(-1, 1)
    y = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    ds = FeatureDataset(x, y, np.array(["test"] * 8))
    return ds, build_sessions(ds, 2, 2, 0, 1, 0)


def test_accuracy_counting(monkeypatch):
    ds, plan = _plan_fixture()
    truth = dict(zip(ds.x[:, 0].tolist(), ds.y.tolist()))
    _patch(monkeypatch, lambda x: [truth[v] for v in x[:, 0]], lambda x: [])
    assert session_accuracy(_Stub(), ds, plan, 2) == 100.0

    base_ids = plan.base_classes
    wrong = {v: c for v, c in truth.items()}
    wrong[float(plan.test_index[base_ids[0]][0])] = 99
    _patch(monkeypatch, lambda x: [wrong[v] for v in x[:, 0]], lambda x: [])
    assert session_accuracy(_Stub(), ds, plan, 1) == 75.0


def test_novel_accuracy(monkeypatch):
    ds, plan = _plan_fixture()
    truth = dict(zip(ds.x[:, 0].tolist(), ds.y.tolist()))
    novel = set(plan.sessions[0])
    _patch(
        monkeypatch,
        lambda x: [UNKNOWN if truth[v] in novel else truth[v] for v in x[:, 0]],
        lambda x: [truth[v] for v in x[:, 0]],
    )
    assert novel_accuracy(_Stub(), ds, plan, 2) == 100.0
    # the base branch keeps the first sample of every novel class for itself
    kept = {float(plan.test_index[c][0]) for c in novel}
    _patch(
        monkeypatch,
        lambda x: [plan.base_classes[0] if v in kept else UNKNOWN if truth[v] in novel else truth[v] for v in x[:, 0]],
        lambda x: [truth[v] for v in x[:, 0]],
    )
    assert novel_accuracy(_Stub(), ds, plan, 2) <= 50.0
    with pytest.raises(ContractError):
        novel_accuracy(_Stub(), ds, plan, 1)


def test_zero_incremental_sessions(toy):
    _, report = _run(toy, sessions=0)
    assert len(report.accuracies) == 1
    assert report.performance_drop == 0.0
    assert report.unknown_accuracy is None


def test_toy_protocol_structure(toy):
    plan, (report, state) = _run(toy, keep_state=True)
    assert len(report.accuracies) == len(report.novel_accuracies) == 3
    assert report.novel_accuracies[0] is None
    assert report.performance_drop == pytest.approx(report.accuracies[0] - report.accuracies[-1], abs=1e-9)
    assert report.average_accuracy == pytest.approx(np.mean(report.accuracies), abs=1e-9)
    sizes = [len(plan.classes_through(s)) for s in (1, 2, 3)]
    assert sizes == [6, 8, 10]
    for counts, size in zip(report.routing, sizes):
        assert counts["base"] + counts["novel"] == size * 10
    known, _ = evaluate_known_unknown(
        state, toy.x[plan.test_indices(plan.base_classes)], toy.y[plan.test_indices(plan.base_classes)],
        toy.x[plan.test_indices(plan.sessions[0])],
    )
    assert report.known_accuracy == pytest.approx(100 * known)


def test_session_one_accuracy_is_known_accuracy(toy):
    plan, (report, _) = _run(toy, sessions=0, keep_state=True)
    assert report.accuracies[0] == pytest.approx(report.known_accuracy)


def test_protocol_deterministic(toy):
    _, a = _run(toy)
    _, b = _run(toy)
    assert a == b


def test_base_branch_tampering_is_caught(toy, monkeypatch):
    real = protocol.train_incremental_session

    def tamper(x, y, state, session, seed, replay=True):
        real(x, y, state, session, seed, replay)
        state.base_params["W0"].value[0, 0] += 1e-12

    monkeypatch.setattr(protocol, "train_incremental_session", tamper)
    with pytest.raises(ProtocolError, match="session 2"):
        _run(toy)
