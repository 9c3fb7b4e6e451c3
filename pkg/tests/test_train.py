import math

import numpy as np
import pytest

from binrbm import (CapacityError, Dataset, PriorSpec, RbmModel, TrainerConfig, TrainTrace,
                    VariationalState, bayes_step, first_order_step, generate_teacher_student,
                    huang_step, overlap, train)
from binrbm.train import CSV_HEADER


def test_huang_step_examples():
    prior = PriorSpec([[0.0]])
    out, clips = huang_step(np.zeros((1, 1)), np.zeros((1, 1)), prior, 0.1)
    assert out[0, 0] == 0.0 and clips == 0
    out, clips = huang_step(np.array([[0.5]]), np.zeros((1, 1)), prior, 0.1)
    assert out[0, 0] == pytest.approx(0.5 - 0.1 * math.atanh(0.5), rel=1e-14)
    assert out[0, 0] == pytest.approx(0.44507, abs=5e-6)
    assert clips == 0
    out, clips = huang_step(np.array([[0.99]]), np.array([[1e6]]), prior, 0.1)
    assert out[0, 0] == 1.0 and clips == 1


def test_huang_step_at_boundary_stays_finite():
    prior = PriorSpec([[0.0, 0.0]])
    out, clips = huang_step(np.array([[1.0, -1.0]]), np.zeros((1, 2)), prior, 0.01)
    assert np.all(np.isfinite(out)) and np.all(np.abs(out) < 1) and clips == 0


def test_huang_step_respects_clip_bound(rng):
    eta = rng.uniform(-0.5, 0.5, (3, 4))
    out, clips = huang_step(eta, rng.normal(0, 50, (3, 4)), PriorSpec.uniform(3, 4), 0.1, clip_bound=0.8)
    assert np.all(np.abs(out) <= 0.8) and clips > 0


def test_bayes_step_examples(rng):
    lam = rng.normal(size=(2, 3))
    out = bayes_step(VariationalState(lam), np.zeros((2, 3)), PriorSpec.uniform(2, 3), 0.2)
    np.testing.assert_allclose(out.lam, 0.8 * lam, rtol=1e-15)
    prior = PriorSpec(rng.uniform(-0.9, 0.9, (2, 3)))
    fixed = bayes_step(VariationalState(prior.nat), np.zeros((2, 3)), prior, 0.3)
    np.testing.assert_allclose(fixed.lam, prior.nat, rtol=1e-15)
    one = bayes_step(VariationalState([[1.0]]), np.array([[0.5]]), PriorSpec([[0.0]]), 0.1)
    assert one.lam[0, 0] == pytest.approx(0.95, rel=1e-15)
    assert one.eta[0, 0] == pytest.approx(math.tanh(0.95), rel=1e-15)
    assert one.eta[0, 0] == pytest.approx(0.73978, abs=5e-6)


def test_bayes_step_mixing_form(rng):
    lam = rng.normal(size=(3, 3))
    grad = rng.normal(size=(3, 3))
    prior = PriorSpec(rng.uniform(-0.9, 0.9, (3, 3)))
    out = bayes_step(VariationalState(lam), grad, prior, 0.25)
    np.testing.assert_allclose(out.lam, 0.75 * lam + 0.25 * (grad + prior.nat), atol=1e-14)


def test_bayes_step_never_reaches_boundary():
    out = bayes_step(VariationalState([[5.0]]), np.array([[1e3]]), PriorSpec([[0.0]]), 0.5)
    assert 0 < out.eta[0, 0] <= 1.0 and out.lam[0, 0] == pytest.approx(502.5)


def test_first_order_step_examples():
    prior = PriorSpec([[0.0]])
    out, clips = first_order_step(np.zeros((1, 1)), np.zeros((1, 1)), prior, 0.1)
    assert out[0, 0] == 0.0 and clips == 0
    out, clips = first_order_step(np.array([[0.99]]), np.array([[1e6]]), prior, 0.1)
    assert out[0, 0] == 1.0 and clips == 1


def test_first_order_equals_huang(rng):
    x = rng.uniform(-1, 1, 1000)
    g = rng.normal(0, 2, 1000)
    prior = PriorSpec(rng.uniform(-0.9, 0.9, 1000))
    for alpha in (0.001, 0.1, 0.5):
        a, ca = huang_step(x, g, prior, alpha)
        b, cb = first_order_step(x, g, prior, alpha)
        assert np.max(np.abs(a - b)) <= 1e-12 and ca == cb


def test_prior_only_convergence_is_geometric(rng):
    prior = PriorSpec(rng.uniform(-0.8, 0.8, (2, 4)))
    alpha = 0.05
    state = VariationalState(rng.normal(0, 2, (2, 4)))
    dists = []
    for _ in range(100):
        dists.append(np.linalg.norm(state.lam - prior.nat))
        state = bayes_step(state, np.zeros((2, 4)), prior, alpha)
    slope = np.polyfit(np.arange(100), np.log(dists), 1)[0]
    assert slope == pytest.approx(math.log(1 - alpha), rel=1e-10)


def test_prior_only_training_converges_to_prior(rng):
    prior = PriorSpec(rng.uniform(-0.8, 0.8, (2, 5)))
    init = VariationalState(rng.normal(0, 1, (2, 5)))
    cfg = TrainerConfig(variant="bayes", alpha=0.1, epochs=60, s1=2, s2=2)
    state, trace = train(cfg, Dataset(np.zeros((0, 5))), prior, init=init)
    np.testing.assert_allclose(state.lam - prior.nat, 0.9 ** 60 * (init.lam - prior.nat), atol=1e-12)
    assert trace.column("elbo")[-1] > trace.column("elbo")[0]


def test_overlap_examples(rng):
    w = rng.choice([-1.0, 1.0], (3, 10))
    teacher = RbmModel.binary(w)
    assert overlap(w, teacher) == 1.0
    assert overlap(-w, teacher) == 1.0
    assert overlap(0.3 * w[[2, 0, 1]] * np.array([[1], [-1], [1]]), teacher) == 1.0
    flipped = w.copy()
    flipped[0, :2] *= -1
    assert overlap(flipped, teacher) == pytest.approx(26 / 30)
    # a half-flipped row has zero dot product under either row sign
    flipped[0, :5] = -w[0, :5]
    assert overlap(flipped, teacher) == pytest.approx(20 / 30)
    # sign(0) counts as +1
    assert overlap(np.zeros((1, 4)), RbmModel.binary(np.ones((1, 4)))) == 1.0
    with pytest.raises(ValueError):
        overlap(np.zeros((2, 10)), teacher)
    with pytest.raises(CapacityError):
        overlap(np.zeros((9, 2)), RbmModel.binary(np.ones((9, 2))))


def test_overlap_null_distribution():
    rng = np.random.default_rng(0)
    vals = []
    for _ in range(1000):
        teacher = RbmModel.binary(rng.choice([-1.0, 1.0], (2, 100)))
        vals.append(overlap(rng.normal(size=(2, 100)), teacher))
    assert np.mean(np.array(vals) <= 0.3) >= 0.99


def test_config_validation():
    for bad in (dict(variant="adam"), dict(alpha=0.0), dict(beta=-1.0), dict(s1=0),
                dict(epochs=-1), dict(clip_bound=0.0), dict(logz_backend="ais")):
        with pytest.raises(ValueError):
            TrainerConfig(**bad)
    assert TrainerConfig().clip_bound == 1.0


@pytest.fixture(scope="module")
def small_problem():
    teacher, data = generate_teacher_student(12, 2, 60, 1.0, seed=2, burn_in_sweeps=100)
    return teacher, data, PriorSpec.uniform(2, 12)


def test_zero_epochs_returns_init(small_problem, rng):
    teacher, data, prior = small_problem
    init = VariationalState(rng.normal(0, 0.3, (2, 12)))
    for variant in ("huang", "bayes", "bayes_first_order"):
        state, trace = train(TrainerConfig(variant=variant, epochs=0), data, prior, init=init)
        np.testing.assert_allclose(state.lam, init.lam, atol=1e-15)
        assert len(trace) == 1 and trace[0].epoch == 0


def test_trace_length_and_determinism(small_problem):
    teacher, data, prior = small_problem
    cfg = TrainerConfig(variant="huang", epochs=15, alpha=0.05, seed=3)
    s1, t1 = train(cfg, data, prior, teacher=teacher)
    s2, t2 = train(cfg, data, prior, teacher=teacher)
    assert len(t1) == 16
    assert s1.eta.tobytes() == s2.eta.tobytes()
    for name in CSV_HEADER:
        if name != "wall_ms":
            assert t1.column(name).tobytes() == t2.column(name).tobytes()


def test_mismatched_shapes_rejected(small_problem):
    teacher, data, _ = small_problem
    with pytest.raises(ValueError):
        train(TrainerConfig(epochs=1), data, PriorSpec.uniform(2, 11))
    with pytest.raises(ValueError):
        train(TrainerConfig(epochs=1), data, PriorSpec.uniform(2, 12), init=VariationalState.zeros(3, 12))


def test_bayes_never_clips_and_huang_stays_in_box(small_problem):
    teacher, data, prior = small_problem
    _, bayes = train(TrainerConfig(variant="bayes", alpha=0.1, epochs=30), data, prior)
    assert np.all(bayes.column("clip_events") == 0)
    assert np.all(bayes.column("max_abs_eta") < 1.0)
    # at alpha=0.5 lambda grows past 19, where float64 tanh rounds to exactly 1;
    # the rule still never clips and lambda stays finite
    _, fast = train(TrainerConfig(variant="bayes", alpha=0.5, epochs=30), data, prior)
    assert np.all(fast.column("clip_events") == 0)
    assert np.all(np.isfinite(fast.column("max_abs_lambda")))
    assert np.all(fast.column("max_abs_eta") <= 1.0)
    _, huang = train(TrainerConfig(variant="huang", alpha=0.5, epochs=30), data, prior)
    assert np.all(huang.column("max_abs_eta") <= 1.0)
    assert huang.column("clip_events").sum() >= 1
    _, fo = train(TrainerConfig(variant="bayes_first_order", alpha=0.5, epochs=30), data, prior)
    assert np.all(fo.column("max_abs_lambda") <= 1.0)


def test_independent_elbo_changes_only_the_elbo(small_problem):
    teacher, data, prior = small_problem
    cfg = dict(variant="bayes", epochs=5, alpha=0.05)
    s_shared, t_shared = train(TrainerConfig(**cfg), data, prior)
    s_indep, t_indep = train(TrainerConfig(independent_elbo=True, **cfg), data, prior)
    np.testing.assert_array_equal(s_shared.lam, s_indep.lam)
    assert not np.array_equal(t_shared.column("elbo"), t_indep.column("elbo"))


def test_warm_start_does_not_change_the_trajectory_much(small_problem):
    teacher, data, prior = small_problem
    cfg = dict(variant="bayes", epochs=10, alpha=0.05)
    warm, _ = train(TrainerConfig(**cfg), data, prior)
    cold, _ = train(TrainerConfig(warm_start=False, **cfg), data, prior)
    np.testing.assert_allclose(warm.lam, cold.lam, atol=1e-6)


def test_exact_backend_training_runs(rng):
    data = Dataset(rng.choice([-1.0, 1.0], (8, 6)))
    cfg = TrainerConfig(variant="bayes", epochs=3, logz_backend="exact", s1=20, s2=20)
    state, trace = train(cfg, data, PriorSpec.uniform(2, 6))
    assert len(trace) == 4 and np.all(trace.column("mp_failures") == 0)
    assert np.all(np.isfinite(trace.column("elbo")))


def test_trace_csv_round_trip(small_problem):
    teacher, data, prior = small_problem
    _, trace = train(TrainerConfig(epochs=3), data, prior, teacher=teacher)
    text = trace.to_csv()
    assert text.splitlines()[0] == "epoch,elbo,overlap,clip_events,max_abs_lambda,max_abs_eta,mp_failures,wall_ms"
    assert len(text.splitlines()) == 5
    back = TrainTrace.from_csv(text)
    for name in CSV_HEADER:
        np.testing.assert_allclose(back.column(name), trace.column(name), rtol=1e-9)
    _, no_teacher = train(TrainerConfig(epochs=1), data, prior)
    assert "nan" in no_teacher.to_csv()
    with pytest.raises(ValueError):
        TrainTrace.from_csv("a,b\n1,2\n")
