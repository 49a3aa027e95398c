import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from msdeblur.autodiff import DivergenceError, ShapeError
from msdeblur.losses import (LOG_EPS, LossBreakdown, adversarial_d_loss, adversarial_g_loss, content_loss,
                             total_loss)
from oracles import content_loss_flat

probs = st.floats(0.0, 1.0)


def random_pyramid(r, batch=2, size=16, levels=3):
    return [r.random((batch, 3, size >> k, size >> k)) for k in range(levels)]


def test_identical_pyramids_zero(rng):
    p = random_pyramid(rng)
    loss, per, grads = content_loss(p, [x.copy() for x in p])
    assert loss == 0.0 and per == [0.0, 0.0, 0.0]
    assert all(not g.any() for g in grads)


def test_single_pixel_hand_value():
    loss, _, _ = content_loss([np.array([[[[0.5]]]])], [np.zeros((1, 1, 1, 1))])
    assert loss == 0.125


def test_two_levels_average(rng):
    p, q = random_pyramid(rng, levels=2), random_pyramid(rng, levels=2)
    loss, (m1, m2), _ = content_loss(p, q)
    assert loss == pytest.approx((m1 + m2) / 4, rel=1e-15)
    assert abs(loss - content_loss_flat(p, q)) <= 1e-10


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_matches_flat_loop_oracle(seed, batch):
    r = np.random.default_rng(seed)
    p, q = random_pyramid(r, batch, 8), random_pyramid(r, batch, 8)
    assert abs(content_loss(p, q)[0] - content_loss_flat(p, q)) <= 1e-10


@given(st.integers(0, 10_000))
def test_symmetry_and_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    p, q = random_pyramid(r, 3), random_pyramid(r, 3)
    a = content_loss(p, q)[0]
    assert content_loss(q, p)[0] == pytest.approx(a, rel=1e-14)
    perm = r.permutation(3)
    assert content_loss([x[perm] for x in p], [x[perm] for x in q])[0] == pytest.approx(a, rel=1e-14)
    assert a >= 0


def test_gradient_formula_and_finite_differences(rng):
    p, q = random_pyramid(rng, 1, 8), random_pyramid(rng, 1, 8)
    _, _, grads = content_loss(p, q)
    K = len(p)
    for k in range(K):
        np.testing.assert_allclose(grads[k], (p[k] - q[k]) / (K * p[k].size), rtol=1e-15)
    eps = 1e-6
    for k in range(K):
        for idx in [(0, 0, 0, 0), (0, 2, 1, 1)]:
            orig = p[k][idx]
            p[k][idx] = orig + eps
            fp = content_loss(p, q)[0]
            p[k][idx] = orig - eps
            fm = content_loss(p, q)[0]
            p[k][idx] = orig
            num = (fp - fm) / (2 * eps)
            assert abs(num - grads[k][idx]) <= 1e-6 * max(abs(num), 1e-12) + 1e-12


def test_content_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        content_loss([rng.random((1, 3, 4, 4))], [rng.random((1, 3, 4, 5))])
    with pytest.raises(ShapeError):
        content_loss([rng.random((1, 3, 4, 4))], [])


def test_d_loss_hand_values():
    loss, _, _ = adversarial_d_loss(np.array([0.5]), np.array([0.5]))
    assert abs(loss - 2 * math.log(2)) <= 1e-12
    perfect, _, _ = adversarial_d_loss(np.array([1 - LOG_EPS]), np.array([LOG_EPS]))
    assert perfect == pytest.approx(0.0, abs=1e-10)
    worst, _, _ = adversarial_d_loss(np.array([1.0]), np.array([1.0]))
    assert math.isfinite(worst) and worst > 20


def test_g_loss_hand_values():
    assert abs(adversarial_g_loss(np.array([0.5]))[0] - math.log(0.5)) <= 1e-12
    assert adversarial_g_loss(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-11)
    assert abs(adversarial_g_loss(np.array([0.5]), non_saturating=True)[0] + math.log(0.5)) <= 1e-12


@given(arrays(np.float64, 4, elements=probs), arrays(np.float64, 4, elements=probs))
def test_losses_always_finite(r, f):
    for v in adversarial_d_loss(r, f):
        assert np.all(np.isfinite(v))
    for ns in (False, True):
        for v in adversarial_g_loss(f, ns):
            assert np.all(np.isfinite(v))


@given(arrays(np.float64, 3, elements=st.floats(0.05, 0.95)))
def test_adversarial_grads_match_finite_differences(f):
    eps = 1e-7
    for ns in (False, True):
        _, g = adversarial_g_loss(f, ns)
        for i in range(3):
            fp, fm = f.copy(), f.copy()
            fp[i] += eps
            fm[i] -= eps
            num = (adversarial_g_loss(fp, ns)[0] - adversarial_g_loss(fm, ns)[0]) / (2 * eps)
            assert num == pytest.approx(g[i], rel=1e-5)
    _, gr, gf = adversarial_d_loss(f, f[::-1].copy())
    fp = f.copy()
    fp[0] += eps
    fm = f.copy()
    fm[0] -= eps
    num = (adversarial_d_loss(fp, f[::-1].copy())[0] - adversarial_d_loss(fm, f[::-1].copy())[0]) / (2 * eps)
    assert num == pytest.approx(gr[0], rel=1e-5)


def test_batch_order_invariance(rng):
    r, f = rng.random(5), rng.random(5)
    perm = rng.permutation(5)
    assert adversarial_d_loss(r, f)[0] == pytest.approx(adversarial_d_loss(r[perm], f[perm])[0], rel=1e-14)


def test_total_loss():
    assert total_loss(0.125, -0.6931, 1e-4) == 0.125 - 0.6931e-4
    assert abs(total_loss(0.125, -0.6931) - (0.125 - 6.931e-5)) <= 1e-15
    assert total_loss(0.3, 5.0, 0.0) == 0.3
    assert total_loss(0.3, 0.0) == 0.3


def test_breakdown_finite_check():
    LossBreakdown(0.1, -0.5, 1.0, 0.1).check_finite()
    with pytest.raises(DivergenceError):
        LossBreakdown(float("nan"), 0.0, 0.0, 0.0).check_finite()


def test_log_line_round_trips_floats():
    b = LossBreakdown(0.1 + 1e-17, -0.69314718, 1.3862, 0.09993)
    fields = b.log_line(7, 5e-5).split()
    assert int(fields[0]) == 7
    assert [float(x) for x in fields[1:]] == [b.content, b.adversarial_g, b.adversarial_d, b.total, 5e-5]
