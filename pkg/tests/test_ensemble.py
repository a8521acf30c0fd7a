import numpy as np
import pytest

from mixstack.ensemble import (BaseSpec, MetaClassifier, MetaDataset, StackingEnsemble, base_features,
                               construct_meta_dataset, ensemble_from_bytes, ensemble_predict, ensemble_to_bytes,
                               fit_base, fit_meta, fit_stacking, fold_assignment, load_any, load_ensemble,
                               save_ensemble)
from mixstack.models import ModelFormatError, TrainConfig, build_model, save_model

from synthetic import OracleBase, UniformBase, oracle_stack, parity_labels, separable, toy_config


def _specs(kinds=("cnn", "lstm", "attention"), epochs=2):
    return [BaseSpec(toy_config(k), TrainConfig(epochs=epochs, batch_size=8)) for k in kinds]


# ------------------------------------------------------------------ base level

def test_three_kinds_give_three_models():
    x, y = separable(n=16, max_len=12)
    models, reports = fit_base(x, y, _specs())
    assert [m.config.kind for m in models] == ["cnn", "lstm", "attention"] and len(reports) == 3


def test_base_seeds_are_offset_by_index():
    x, y = separable(n=16, max_len=12)
    models, _ = fit_base(x, y, _specs(("lstm", "lstm")), seed=4)
    assert models[0].state()["head.W"].tobytes() != models[1].state()["head.W"].tobytes()
    alone, _ = fit_base(x, y, _specs(("lstm",)), seed=5)
    assert models[1].predict_proba(x).tobytes() == alone[0].predict_proba(x).tobytes()


def test_parallel_fit_matches_serial():
    x, y = separable(n=16, max_len=12)
    serial, _ = fit_base(x, y, _specs(), seed=1)
    parallel, _ = fit_base(x, y, _specs(), seed=1, jobs=3)
    for a, b in zip(serial, parallel):
        assert a.predict_proba(x).tobytes() == b.predict_proba(x).tobytes()


def test_base_failure_names_index():
    x, y = separable(n=16, max_len=12)
    specs = _specs(("lstm", "lstm"))
    specs[1] = BaseSpec(toy_config("lstm", num_classes=2), specs[1].train)
    with pytest.raises(ValueError, match="share num_classes"):
        fit_base(x, y, specs)
    specs = [BaseSpec(toy_config("lstm"), TrainConfig(epochs=1, batch_size=8)),
             BaseSpec(toy_config("lstm", vocab_size=10), TrainConfig(epochs=1, batch_size=8))]
    with pytest.raises(RuntimeError, match="base model 1"):
        fit_base(x, y, specs)


def test_empty_spec_list():
    with pytest.raises(ValueError):
        fit_base(np.zeros((2, 12), int), np.zeros(2, int), [])


# ------------------------------------------------------------------ meta dataset

def test_feature_width_is_t_times_c():
    x, y = separable(n=10, max_len=12)
    base = [UniformBase(), OracleBase()]
    data = construct_meta_dataset(base, x, y, 3)
    assert data.features.shape == (10, 6)


def test_uniform_base_gives_constant_features():
    x, y = separable(n=10, max_len=12)
    data = construct_meta_dataset([UniformBase()], x, y, 3)
    np.testing.assert_array_equal(data.features, 1 / 3)


def test_meta_dataset_validation():
    with pytest.raises(ValueError, match="columns"):
        MetaDataset(np.full((2, 5), 0.2), np.zeros(2, int), 2, 3)
    with pytest.raises(ValueError, match="sum to 1"):
        MetaDataset(np.full((2, 3), 0.5), np.zeros(2, int), 1, 3)


class _Recorder:
    """Base model that remembers which rows it was trained on."""

    def __init__(self, seen):
        self.seen = {tuple(r) for r in seen}

    def predict_proba(self, x):
        for row in x:
            assert tuple(row) not in self.seen, "a held-out row was in this model's training data"
        return np.full((len(x), 3), 1 / 3)


def test_kfold_features_come_from_models_that_never_saw_the_row():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 1000, size=(100, 12))
    y = parity_labels(x)
    calls = []

    def refit(positions):
        calls.append(positions)
        return [_Recorder(x[positions])]

    data = construct_meta_dataset([UniformBase()], x, y, 3, mode="kfold", k=5, seed=3, refit=refit)
    assert len(calls) == 5
    for f, positions in enumerate(calls):
        held = np.flatnonzero(data.fold_of == f)
        assert not set(held) & set(positions)
        assert len(held) + len(positions) == 100


def test_fold_assignment_balanced():
    folds = fold_assignment(100, 5, seed=0)
    assert np.bincount(folds).tolist() == [20] * 5
    with pytest.raises(ValueError):
        fold_assignment(3, 5, seed=0)


def test_kfold_requires_refit_and_known_mode():
    x, y = separable(n=10, max_len=12)
    with pytest.raises(ValueError, match="refit"):
        construct_meta_dataset([UniformBase()], x, y, 3, mode="kfold")
    with pytest.raises(ValueError, match="mode"):
        construct_meta_dataset([UniformBase()], x, y, 3, mode="holdout")


def test_modes_differ_only_in_provenance():
    a_ens, a, _ = oracle_stack(0, "insample")
    b_ens, b, _ = oracle_stack(0, "kfold")
    assert a.labels.tolist() == b.labels.tolist()
    assert a.features.shape == b.features.shape
    np.testing.assert_array_equal(a.features[:, 3:], b.features[:, 3:])  # oracle block
    assert a.fold_of is None and b.fold_of is not None


def test_dropping_a_base_only_changes_feature_blocks():
    x, y = separable(n=12, max_len=12)
    two = construct_meta_dataset([UniformBase(), OracleBase()], x, y, 3)
    one = construct_meta_dataset([OracleBase()], x, y, 3)
    assert two.labels.tolist() == one.labels.tolist()
    np.testing.assert_array_equal(two.features[:, 3:], one.features)


# ------------------------------------------------------------------ meta classifier

def test_oracle_features_fit_perfectly():
    x = np.random.default_rng(1).integers(0, 50, size=(80, 12))
    y = parity_labels(x)
    data = construct_meta_dataset([UniformBase(), OracleBase()], x, y, 3)
    meta = fit_meta(data, seed=0)
    assert (meta.predict_proba(data.features).argmax(axis=1) == y).all()


def test_uniform_features_predict_class_frequencies():
    y = np.array([0] * 5 + [1] * 12 + [2] * 3)
    data = MetaDataset(np.full((20, 3), 1 / 3), y, 1, 3)
    meta = fit_meta(data, seed=0)
    p = meta.predict_proba(data.features)
    # the bias-only optimum of cross-entropy is the empirical class distribution
    np.testing.assert_allclose(p[0], np.bincount(y) / 20, atol=1e-3)
    assert (p.argmax(axis=1) == 1).all()


def test_meta_fit_deterministic():
    x, y = separable(n=30, max_len=12)
    data = construct_meta_dataset([OracleBase(), UniformBase()], x, y, 3)
    a, b = fit_meta(data, seed=2), fit_meta(data, seed=2)
    assert a.weight.tobytes() == b.weight.tobytes() and a.bias.tobytes() == b.bias.tobytes()


def test_fit_meta_rejects_empty():
    with pytest.raises(ValueError):
        fit_meta(MetaDataset(np.zeros((0, 3)), np.zeros(0, int), 1, 3))


def test_identity_meta_follows_single_base():
    x, y = separable(n=20, max_len=12)
    model = build_model(toy_config("attention"), seed=0)
    ens = StackingEnsemble([model], MetaClassifier.identity(1, 3), 3)
    labels, probs = ensemble_predict(ens, x)
    assert (labels == model.predict(x)).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_meta_rejects_wrong_width():
    with pytest.raises(ValueError):
        MetaClassifier.identity(2, 3).predict_proba(np.zeros((1, 3)))


@pytest.mark.parametrize("mode", ["insample", "kfold"])
def test_oracle_stack_accuracy_over_seeds(mode):
    for seed in range(5):
        ens, _, (xv, yv) = oracle_stack(seed, mode)
        labels, _ = ens.predict(xv)
        assert (labels == yv).mean() >= 0.98, (mode, seed)


def test_argmax_invariant_under_monotone_logit_maps():
    rng = np.random.default_rng(0)
    meta = MetaClassifier(rng.normal(size=(6, 3)), rng.normal(size=3))
    feats = construct_meta_dataset([UniformBase(), OracleBase()], rng.integers(0, 50, (40, 12)),
                                   np.zeros(40, int), 3).features
    z = meta.logits(feats)
    labels = meta.predict_proba(feats).argmax(axis=1)
    for f in (lambda t: 3.0 * t + 7.0, np.exp, lambda t: t ** 3, np.arctan):
        assert (f(z).argmax(axis=1) == labels).all()
    scaled = MetaClassifier(meta.weight * 2.5, meta.bias * 2.5 - 1.0)
    assert (scaled.predict_proba(feats).argmax(axis=1) == labels).all()


# ------------------------------------------------------------------ end to end & files

def _small_stack(mode="insample", kinds=("cnn", "lstm", "attention")):
    x, y = separable(n=20, max_len=12)
    return fit_stacking(x, y, _specs(kinds), mode=mode, k=3, seed=1, meta_steps=200), x


def test_fit_stacking_shapes():
    (ens, reports, data), x = _small_stack()
    assert data.features.shape == (20, 9) and len(reports) == 3
    p = ens.predict_proba(x)
    assert p.shape == (20, 3)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_singleton_ensemble():
    (ens, _, data), x = _small_stack(kinds=("lstm",))
    assert len(ens.base) == 1 and data.features.shape[1] == 3


def test_kfold_stacking_records_folds():
    (ens, _, data), _ = _small_stack(mode="kfold", kinds=("lstm",))
    assert ens.mode == "kfold" and sorted(set(data.fold_of.tolist())) == [0, 1, 2]


def test_ensemble_round_trip(tmp_path):
    (ens, _, _), x = _small_stack()
    ens.info = {"labels": ["a", "b", "c"]}
    save_ensemble(ens, tmp_path / "e.bin")
    loaded = load_ensemble(tmp_path / "e.bin")
    assert loaded.predict_proba(x).tobytes() == ens.predict_proba(x).tobytes()
    assert loaded.info == ens.info and loaded.mode == ens.mode
    assert ensemble_to_bytes(loaded) == ensemble_to_bytes(ens)
    assert isinstance(load_any(tmp_path / "e.bin"), StackingEnsemble)


def test_ensemble_file_errors(tmp_path):
    (ens, _, _), _ = _small_stack(kinds=("lstm",))
    blob = ensemble_to_bytes(ens)
    assert blob[:4] == b"MXE1"
    with pytest.raises(ModelFormatError, match="magic"):
        ensemble_from_bytes(b"MXS1" + blob[4:])
    with pytest.raises(ModelFormatError, match="version"):
        ensemble_from_bytes(blob[:4] + (2).to_bytes(4, "little") + blob[8:])
    with pytest.raises(ModelFormatError, match="truncated"):
        ensemble_from_bytes(blob[:-5])
    (tmp_path / "junk").write_bytes(b"JUNK")
    with pytest.raises(ModelFormatError):
        load_any(tmp_path / "junk")


def test_load_any_dispatches_models(tmp_path):
    save_model(build_model(toy_config("lstm")), tmp_path / "m.bin")
    assert load_any(tmp_path / "m.bin").config.kind == "lstm"


def test_base_features_concatenate_in_order():
    x = np.zeros((2, 12), int)
    f = base_features([OracleBase(), UniformBase()], x)
    np.testing.assert_array_equal(f[:, :3], np.eye(3)[[0, 0]])
    np.testing.assert_array_equal(f[:, 3:], 1 / 3)
