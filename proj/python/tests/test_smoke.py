import math

import numpy as np
import pytest

import privdistill as pd


def test_ndcg_examples():
    assert pd.ndcg_at_k([0.1, 0.9, 0.3], [0, 1, 0], 3) == 1.0
    assert pd.ndcg_at_k([0.1, 0.9], [1, 0], 2) == pytest.approx(0.6309, abs=1e-4)
    assert pd.rank_by_scores([0.9, 0.1, 0.5]) == [1, 3, 2]
    with pytest.raises(ValueError):
        pd.rank_by_scores([0.1, float("nan")])


def test_losses():
    loss, grad = pd.rank_bce([0.0], [1.0])
    assert loss == pytest.approx(math.log(2))
    assert grad == [pytest.approx(-0.5)]
    loss, _ = pd.rank_net([0.3, 0.3], [1.0, 0.0], [0, 2])
    assert loss == pytest.approx(2 * math.log(2))
    with pytest.raises(ValueError):
        pd.rank_bce([0.0], [1.5])


def test_label_probability():
    assert pd.label_probability(4.0, 4.0, 4.8) == pytest.approx(pd.sigmoid(-3.2))


def test_dataset_round_trip(tmp_path):
    ds = pd.latent_fixture(groups=5, docs=6, regular=3, privileged=1, seed=2)
    assert len(ds) == 5
    assert ds.num_docs == 30
    assert ds.privileged_cols == [3]
    assert isinstance(ds.groups[0].features, np.ndarray)
    path = tmp_path / "d.txt"
    pd.write_dataset(path, ds)
    back = pd.read_dataset(path)
    assert back.content_hash() == ds.content_hash()


def test_training_smoke():
    train = pd.generate_binary_labels(pd.latent_fixture(groups=40, regular=4, privileged=2, seed=1), tau_target=3.0, seed=3)
    test = pd.generate_binary_labels(pd.latent_fixture(groups=20, regular=4, privileged=2, seed=2), tau_target=3.0, seed=4)
    out = pd.run_strategy(train, test, strategy="pfd", epochs=2, hidden=8, depth=2, lr=0.01, seed=0)
    assert out["best_epoch"] in (1, 2)
    assert set(out["test"]) == {8, 16, 32}
    assert 0.0 <= out["test"][8][0] <= 1.0
    with pytest.raises(ValueError):
        pd.run_strategy(train, test, strategy="bogus")


def test_linear_theory():
    e = pd.example_experiment(0)
    cf = pd.closed_form_risk_ols(e)
    mc, se = pd.monte_carlo_risk(e, "ols", 4000)
    assert abs(mc - cf) <= 4 * se
    total, noise, priv = pd.closed_form_risk_pfd(pd.example_experiment(5))
    assert total == pytest.approx(noise + priv)
