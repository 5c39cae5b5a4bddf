import math

import numpy as np
import pytest

from incflow.fields import builtin_field
from incflow.flow import FlowMap, builtin_generator
from incflow.probe import (
    OrbitRecord,
    build_counterexample,
    classify_orbit,
    contraction_audit,
    detect_periodic,
    fit_single_flow,
)


@pytest.fixture(scope="module")
def composite():
    return build_counterexample(steps=512)


def test_counterexample_identity_outside_disc(composite):
    pts = np.array([[0.9, 0.9], [0.1, 0.1], [0.5, 0.8]])
    assert np.array_equal(composite.apply(pts), pts)


def test_counterexample_center_fixed(composite):
    p = np.array([0.5, 0.5])
    assert np.array_equal(composite.apply(p), p)


def test_counterexample_period_two_on_line(composite):
    # iteration oracle: squeeze fixes the line, the half turn reflects it
    a = 1.0 / 16
    q = np.array([0.5, 0.5 + a])
    f1 = composite.apply(q)
    assert np.abs(f1 - np.array([0.5, 0.5 - a])).max() <= 1e-8
    f2 = composite.apply(f1)
    assert np.abs(f2 - q).max() <= 1e-6


def test_counterexample_stage_order(composite):
    # stage 1 is the squeeze, stage 2 the rotation
    assert composite.stages[0].field.ref["id"] == "squeeze_clipped"
    assert composite.stages[1].field.ref["id"] == "rotation_clipped"


def test_classification_recomputable_from_iterates(composite):
    records = detect_periodic(composite, grid_n=9, k_max=2, refine=False)
    for r in records:
        cls, period, _ = r.recompute_classification()
        assert cls == r.classification
        assert period == r.period


def test_classify_orbit_rules():
    start = np.array([0.0, 0.0])
    fixed = np.stack([start, start + 1e-9, start + 2e-9])
    assert classify_orbit(fixed)[0] == "fixed"
    periodic = np.stack([start, start + 0.5, start + 1e-8, start + 0.5])
    cls, k, _ = classify_orbit(periodic)
    assert cls == "periodic" and k == 2
    # near-return below the separation floor is not periodic
    tiny = np.stack([start, start + 5e-3, start + 1e-8, start + 5e-3])
    assert classify_orbit(tiny)[0] != "periodic"


def test_detect_periodic_identity_map():
    records = detect_periodic(lambda X: X, grid_n=5, k_max=2, refine=False)
    assert all(r.classification == "fixed" for r in records)


def test_detect_periodic_finds_line(composite):
    records = detect_periodic(composite, grid_n=17, k_max=2)
    periodic = [r for r in records if r.classification == "periodic"]
    assert periodic
    assert all(r.period == 2 for r in periodic)
    # the composition's period-2 points concentrate on the line x = 1/2
    assert max(abs(r.start[0] - 0.5) for r in periodic) <= 1e-4
    refined = [r for r in periodic if r.data.get("refined")]
    assert refined
    assert min(abs(r.start[0] - 0.5) for r in refined) <= 1e-6
    # genuine period 2: far from the start after one application
    assert all(
        np.abs(r.iterates[1] - r.start).max() >= 1e-2 for r in periodic
    )


def test_pure_rotation_has_circle_family():
    gen = builtin_generator("rotation_only", steps=512)
    records = detect_periodic(gen, grid_n=17, k_max=2)
    periodic = [r for r in records if r.classification == "periodic"]
    assert periodic
    # the half-turn's period-2 set is a disc-full of circles, so periodic
    # seeds appear off the vertical line too, unlike the composition
    off_line = [r for r in periodic if abs(r.start[0] - 0.5) > 1e-2]
    assert off_line


def test_contraction_audit_counterexample(composite):
    q = np.array([0.5, 0.5 + 1.0 / 16])
    audit = contraction_audit(composite, q, radius=0.01)
    assert audit["max_ratio"] <= 0.9
    assert audit["period"] == 2
    # inside the plateau one double application scales the transverse
    # offset by exp(-2) and keeps the parallel offset, so a probe at angle
    # theta contracts by sqrt(cos^2 e^-4 + sin^2) exactly
    for p in audit["probes"]:
        th = p["angle_rad"]
        predicted = math.sqrt(
            math.cos(th) ** 2 * math.exp(-4.0) + math.sin(th) ** 2
        )
        assert p["ratios"][0] == pytest.approx(predicted, rel=1e-3)


def test_contraction_audit_radius_range(composite):
    q = np.array([0.5, 0.5 + 1.0 / 16])
    for radius in (1e-3, 5e-3, 2e-2):
        audit = contraction_audit(composite, q, radius=radius)
        assert audit["max_ratio"] < 1.0


def test_contraction_audit_identity_map():
    audit = contraction_audit(lambda X: X, np.array([0.5, 0.5]), radius=0.01)
    assert audit["max_ratio"] == pytest.approx(1.0, abs=1e-12)


def test_pure_squeeze_contraction_rate():
    # iteration oracle: inside the plateau the squeeze shrinks x-distance
    # to the line by exactly exp(-1) per application
    fl = FlowMap(builtin_field("squeeze_clipped"), steps=512)
    q = np.array([0.5, 0.5])
    probe = q + np.array([0.01, 0.0])
    once = fl.apply(probe)
    ratio = abs(once[0] - 0.5) / 0.01
    assert ratio == pytest.approx(math.exp(-1.0), abs=1e-6)


def test_contraction_audit_requires_periodic_record(composite):
    rec = OrbitRecord(np.zeros(2), np.zeros((3, 2)), "unclassified")
    with pytest.raises(ValueError):
        contraction_audit(composite, rec)


def test_fit_identity_found_at_initialization():
    res = fit_single_flow(lambda X: X, n_grid=2, budget=50, seed=0)
    assert res.residual_sup <= 1e-9
    assert res.init_label == "zero"


def test_fit_result_recomputable():
    res = fit_single_flow(lambda X: X, n_grid=2, budget=50, seed=0)
    axes = np.linspace(0.0, 1.0, res.eval_grid_n)
    pts = np.stack(np.meshgrid(axes, axes, indexing="ij"), axis=-1).reshape(-1, 2)
    again = res.recompute_residual(pts, pts)
    assert again == pytest.approx(res.residual_sup, abs=1e-12)


def test_fit_validation():
    with pytest.raises(ValueError):
        fit_single_flow(lambda X: X, budget=0)


def test_detect_periodic_validation(composite):
    with pytest.raises(ValueError):
        detect_periodic(composite, k_max=0)
