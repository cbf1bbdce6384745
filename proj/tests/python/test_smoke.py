import numpy as np
import pytest

import nidlab


def small_hyper(steps=30):
    h = nidlab.Hyper()
    h.K = 2
    h.m = 2
    h.d1 = 2
    h.dP = 2
    h.dR = 2
    h.H = 4
    h.steps = steps
    return h


def test_episode_generation_is_deterministic():
    env = nidlab.EnvSpec.inclined_plane(False)
    a = nidlab.generate_episodes(env, nidlab.Split.TRAIN, 3, 7)
    b = nidlab.generate_episodes(env, nidlab.Split.TRAIN, 3, 7)
    assert len(a) == 3
    assert all(len(e.states) == env.horizon + 1 for e in a)
    assert all(x.states[-1] == y.states[-1] for x, y in zip(a, b))
    ndjson = nidlab.episodes_to_ndjson(a)
    assert len(ndjson.splitlines()) == 3
    again = nidlab.episodes_from_ndjson(ndjson)
    assert again[0].states[0] == a[0].states[0]


def test_state_tensor_rows_are_one_hot():
    env = nidlab.EnvSpec.inclined_plane(False)
    state = nidlab.sample_initial(env, nidlab.Split.TRAIN, nidlab.Rng(1))
    x = nidlab.to_state_tensor(env, state)
    assert x.shape == (env.n_objects(), env.D)
    assert np.allclose(x.sum(axis=1), 1.0)
    assert list(np.argmax(x, axis=1)) == state.pos


def test_train_predict_and_checkpoint_round_trip():
    env = nidlab.EnvSpec.inclined_plane(False)
    tm = nidlab.train_model("nid", small_hyper(), env, seed=0)
    assert tm.kind == "nid"
    state = nidlab.sample_initial(env, nidlab.Split.TRAIN, nidlab.Rng(2))
    x = nidlab.to_state_tensor(env, state)
    y = tm.predict(x)
    assert y.shape == x.shape
    assert np.allclose(y.sum(axis=1), 1.0, atol=1e-9)

    clone = nidlab.checkpoint_from_json(tm.checkpoint_json())
    assert np.array_equal(clone.predict(x), y)


def test_compound_rollout_accumulates():
    env = nidlab.EnvSpec.inclined_plane(False)
    tm = nidlab.train_model("conv1", small_hyper(), env, seed=0, channels=2)
    rep = nidlab.compound_rollout(tm, env, nidlab.Split.TEST, n_rollouts=4, horizon=3, seed=0)
    assert len(rep.mean_cumulative) == 3
    assert all(b >= a for a, b in zip(rep.mean_cumulative, rep.mean_cumulative[1:]))


def test_embedding_report_covers_every_pair():
    env = nidlab.EnvSpec.inclined_plane(False)
    tm = nidlab.train_model("nid", small_hyper(), env, seed=0)
    rep = nidlab.embedding_report(tm, env)
    assert len(rep.points) == env.n_objects() * env.D
    assert rep.labels == nidlab.cluster_labels(env)
    assert -1.0 <= rep.silhouette <= 1.0
    with pytest.raises(ValueError):
        nidlab.embedding_report(nidlab.train_model("mlp", small_hyper(), env, hidden=8), env)


def test_gradient_sweep_is_tight():
    res = nidlab.gradient_sweep(5, 1)
    assert res.n_configs == 5
    assert res.max_rel_error < 1e-4


def test_config_normalization_and_errors():
    canon = nidlab.canonical_config("{}")
    assert nidlab.canonical_config(canon) == canon
    with pytest.raises(ValueError, match="trian"):
        nidlab.canonical_config('{"trian":{}}')


def test_render_helpers():
    env = nidlab.EnvSpec.inclined_plane(False)
    state = nidlab.GridState([0, 2, 4, 6])
    lines = nidlab.render_state(env, state).splitlines()
    assert lines[0][0] == "r"
    assert lines[1][2] == "g"
    x = nidlab.to_state_tensor(env, state)
    assert nidlab.render_distribution(env, x).splitlines()[0][0] == "R"


def test_cli_passthrough(tmp_path):
    out = tmp_path / "run"
    code, stdout, stderr = nidlab.run_command(["gen", "--out", str(out), "--seed", "3"])
    assert code == 0, stderr
    assert "episodes" in stdout
    assert (out / "episodes_train.ndjson").exists()
    assert '"seeds":[3]' in (out / "effective_config.json").read_text()

    bad = nidlab.run_command(["eval", "--out", str(out)])
    assert bad[0] == 2  # no checkpoint to evaluate
