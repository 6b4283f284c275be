import numpy as np
import pytest

from nbmf.core import HyperParams, Mode
from nbmf.persist import FittedModel, load_model, read_meta, save_model


def model(exposure=True):
    rng = np.random.default_rng(0)
    W, H = rng.gamma(1.0, size=(3, 2)), rng.gamma(1.0, size=(4, 2))
    exp = np.array([[0, 1, 0.25], [2, 3, 3.5]]) if exposure else None
    return FittedModel(W, H, "cavi", HyperParams(alpha=0.3, beta_h=1 / 3), False,
                       ("a", "b", "c"), ("w", "x", "y", "z"), exp, {"seed": 4})


def test_roundtrip_is_bit_exact(tmp_path):
    m = model()
    save_model(m, tmp_path)
    back = load_model(tmp_path)
    np.testing.assert_array_equal(back.W, m.W)
    np.testing.assert_array_equal(back.H, m.H)
    np.testing.assert_array_equal(back.exposure, m.exposure)
    assert back.hyper == m.hyper and back.users == m.users and back.items == m.items
    assert back.extra == {"seed": "4"} and back.method == "cavi"


def test_meta_contents(tmp_path):
    m = model(exposure=False)
    m.binarized = True
    m.hyper = HyperParams(mode=Mode.PF)
    save_model(m, tmp_path)
    meta = read_meta(tmp_path)
    assert (meta["U"], meta["I"], meta["K"]) == ("3", "4", "2")
    assert meta["binarized"] == "true" and meta["mode"] == "PF"
    assert not (tmp_path / "q_a_mean.csv").exists()
    assert load_model(tmp_path).exposure is None


def test_resave_drops_stale_exposure(tmp_path):
    save_model(model(), tmp_path)
    save_model(model(exposure=False), tmp_path)
    assert not (tmp_path / "q_a_mean.csv").exists()


def test_corrupt_meta(tmp_path):
    save_model(model(), tmp_path)
    meta = (tmp_path / "meta").read_text().replace("K=2", "K=3")
    (tmp_path / "meta").write_text(meta)
    with pytest.raises(ValueError, match="do not match"):
        load_model(tmp_path)
    (tmp_path / "meta").write_text("U=3\n")
    with pytest.raises(ValueError, match="missing key"):
        load_model(tmp_path)
