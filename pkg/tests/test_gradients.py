import numpy as np
import pytest

from crossmodal import gradcheck, losses
from crossmodal.errors import ConfigError
from crossmodal.gradcheck import (
    COMPONENTS,
    check_component,
    finite_difference,
    max_rel_error,
    run_suite,
)
from crossmodal.losses import LossOutput


def test_finite_difference_on_quadratic():
    x = np.array([[1.0, -2.0], [0.5, 3.0]])
    fd = finite_difference(lambda v: float((v**2).sum()), x)
    assert np.allclose(fd, 2 * x, atol=1e-8)


def test_finite_difference_restores_input():
    x = np.array([1.0, 2.0, 3.0])
    finite_difference(lambda v: float(v.sum()), x)
    assert np.array_equal(x, [1.0, 2.0, 3.0])


def test_max_rel_error_uses_floor_for_tiny_coordinates():
    a = np.array([0.0, 1.0])
    n = np.array([1e-9, 1.0])
    # first coordinate falls below the floor: compared as |a-n| / floor
    assert max_rel_error(a, n) == pytest.approx(1e-9 / gradcheck.REL_FLOOR)
    assert max_rel_error(a, a) == 0.0


def test_run_suite_covers_requested_components():
    results = run_suite(instances=2, seed=0, components=["l_id", "l_global"])
    assert [r.name for r in results] == ["l_id", "l_global"]
    for r in results:
        assert r.passed
        assert r.instances == 2
        assert r.max_rel_error <= gradcheck.DEFAULT_TOL


def test_every_component_is_checkable():
    # one instance each: the full 20-instance sweep runs in the acceptance suite
    for name in COMPONENTS:
        err = check_component(name, instances=1, seed=3)
        assert err <= gradcheck.DEFAULT_TOL, name


def test_unknown_component_rejected():
    with pytest.raises(ConfigError):
        check_component("l_everything")


def test_suite_catches_a_planted_gradient_bug(monkeypatch):
    real = losses.msel

    def sabotaged(batch, metric="euclid"):
        out = real(batch, metric)
        return LossOutput(out.value, -out.grad)

    monkeypatch.setattr(losses, "msel", sabotaged)
    results = run_suite(instances=2, seed=0, components=["msel_euclid"])
    assert not results[0].passed
    assert results[0].max_rel_error > 1.0
