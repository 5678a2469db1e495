import numpy as np
import pytest
from sklearn.base import clone

from anchorlstm.archive import MAGIC, load_model, save_model
from anchorlstm.config import RunConfig, load_generator_spec, parse_run_config
from anchorlstm.data import CycleSpec, generate_synthetic
from anchorlstm.estimator import AnchoredLSTMRegressor
from anchorlstm.exceptions import ArchiveError, ConfigError, InputError, VersionError
from anchorlstm.lstm import GateBlock
from anchorlstm.workflow import fit_frame, predict_frame


def tiny(method="tnll-anchor", **kw):
    base = dict(method=method, seed=2, num_layers=1, hidden_dim=3, n_members=2, epochs=1, mc_samples=4)
    base.update(kw)
    run = RunConfig(**base)
    run.validate()
    return run


@pytest.fixture(scope="module")
def frame():
    return generate_synthetic(CycleSpec(duration_s=200), seed=0)


def test_parse_defaults_and_overrides():
    run = parse_run_config("[run]\nmethod = quantile-anchor\n[network]\nhidden_dim = 8\n[prior]\nvariance = 0.02\nhead = 0.5\n")
    assert run.method == "quantile-anchor" and run.hidden_dim == 8
    assert run.prior_variance["head"] == 0.5 and run.prior_variance["forget_f"] == 0.02
    assert run.epochs == 300 and run.n_members == 30 and run.nu == 4.0


def test_parse_collects_every_problem():
    with pytest.raises(ConfigError) as err:
        parse_run_config("[run]\nmethod = nope\ncolour = red\n[network]\nhidden_dim = x\n[bogus]\na = 1\n")
    msg = str(err.value)
    for needle in ("colour", "hidden_dim", "[bogus]"):
        assert needle in msg


def test_validate_lists_all_fields():
    run = RunConfig(method="tnll-dropout", dropout_rate=0.0, epochs=0, nu=1.5)
    with pytest.raises(ConfigError) as err:
        run.validate()
    msg = str(err.value)
    assert "dropout_rate" in msg and "epochs" in msg and "nu" in msg


def test_ini_round_trip():
    run = tiny(prior_variance={b.value: 0.01 * (i + 1) for i, b in enumerate(GateBlock)})
    assert parse_run_config(run.to_ini()) == run
    assert RunConfig.from_dict(run.to_dict()) == run


def test_generator_spec(tmp_path):
    path = tmp_path / "gen.ini"
    path.write_text("[cycle]\nduration_s = 1600\n[noise]\nnu = 5\n[vehicle]\nregenerative = yes\n")
    cycle, noise, vehicle = load_generator_spec(str(path))
    assert cycle.duration_s == 1600 and noise.nu == 5.0 and vehicle.regenerative
    path.write_text("[noise]\nnu = -1\n")
    with pytest.raises(ConfigError):
        load_generator_spec(str(path))
    path.write_text("[engine]\nhp = 9\n")
    with pytest.raises(ConfigError):
        load_generator_spec(str(path))


def test_estimator_is_sklearn_compatible():
    est = AnchoredLSTMRegressor(n_members=3, hidden_dim=5)
    params = est.get_params()
    assert params["n_members"] == 3 and params["method"] == "tnll-anchor"
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(epochs=7)
    assert est.epochs == 7


def test_estimator_fit_predict_shapes():
    rng = np.random.default_rng(0)
    X, y = rng.uniform(0, 1, (12, 4, 2)), rng.uniform(0, 1, 12)
    est = AnchoredLSTMRegressor(n_members=2, num_layers=1, hidden_dim=3, epochs=1).fit(X, y)
    assert est.predict(X).shape == (12,)
    assert est.n_features_in_ == 2 and est.window_length_ == 4
    summary = est.predict_interval(X)
    assert np.all(summary.lo <= summary.hi)
    with pytest.raises(InputError):
        est.predict(X[:, :, :1])


def test_estimator_rejects_unknown_method():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        AnchoredLSTMRegressor(method="bayes").fit(rng.uniform(0, 1, (4, 3, 1)), np.zeros(4))


@pytest.mark.parametrize("method", ["tnll-anchor", "quantile-dropout"])
def test_archive_round_trip_bit_exact(tmp_path, frame, method):
    run = tiny(method)
    est, stats, _ = fit_frame(frame, run)
    path = tmp_path / "m.bin"
    save_model(path, est, stats, run)
    archive = load_model(path)
    assert archive.run_config == run and archive.stats == stats
    for a, b in zip(est.ensemble_.members, archive.estimator.ensemble_.members):
        for k in a:
            assert a[k].tobytes() == b[k].tobytes()
    p1 = predict_frame(est, stats, frame, run.features).summary
    p2 = predict_frame(archive.estimator, archive.stats, frame, run.features).summary
    assert p1.mean.tobytes() == p2.mean.tobytes()
    assert p1.lo.tobytes() == p2.lo.tobytes() and p1.hi.tobytes() == p2.hi.tobytes()
    assert len(archive.training_summary) == len(est.ensemble_.members)


def test_archive_anchor_presence(tmp_path, frame):
    for method, has in (("tnll-anchor", True), ("tnll-dropout", False)):
        run = tiny(method)
        est, stats, _ = fit_frame(frame, run)
        save_model(tmp_path / "m.bin", est, stats, run)
        anchors = load_model(tmp_path / "m.bin").estimator.ensemble_.anchors
        assert (anchors is not None) == has
        if has:
            for a, b in zip(anchors, est.ensemble_.anchors):
                assert all(np.array_equal(a[k], b[k]) for k in a)


def test_archive_corruption(tmp_path, frame):
    run = tiny()
    est, stats, _ = fit_frame(frame, run)
    path = tmp_path / "m.bin"
    save_model(path, est, stats, run)
    raw = path.read_bytes()
    for cut in (5, len(MAGIC) + 3, len(raw) // 2, len(raw) - 1):
        (tmp_path / "cut.bin").write_bytes(raw[:cut])
        with pytest.raises(ArchiveError, match="offset|magic"):
            load_model(tmp_path / "cut.bin")
    (tmp_path / "junk.bin").write_bytes(b"hello world")
    with pytest.raises(ArchiveError, match="magic"):
        load_model(tmp_path / "junk.bin")
    (tmp_path / "v2.bin").write_bytes(raw.replace(b'"format_version": 1', b'"format_version": 9', 1))
    with pytest.raises(VersionError):
        load_model(tmp_path / "v2.bin")
