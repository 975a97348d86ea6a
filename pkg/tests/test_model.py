import numpy as np
import pytest

from ski.errors import NonFinite, NotPositiveDefinite
from ski.model import (
    BasisLibrary,
    Dims,
    NoiseFactors,
    ParametricModel,
    augmented_transition,
    belief_blocks,
    initial_belief,
)
from ski.scenarios import WingRockScenario
from ski.scenarios.wingrock import PAPER_WEIGHTS
from oracles import random_spd, wingrock_euler_step


def test_dims_augmented_size():
    assert Dims(d_x=2, d_u=1, d_y=1, d_theta=6).L_sigma == 8


def test_parameter_block_copied_through():
    model = WingRockScenario().model()
    rng = np.random.default_rng(0)
    xbar = rng.standard_normal(8)
    out = augmented_transition(model, xbar, np.array([1.3]))
    assert np.array_equal(out[2:], xbar[2:])
    batch = rng.standard_normal((8, 5))
    assert np.array_equal(augmented_transition(model, batch, np.array([0.2]))[2:], batch[2:])


def test_wingrock_zero_equilibrium():
    model = WingRockScenario().model()
    out = augmented_transition(model, np.zeros(8), np.array([0.0]))
    assert np.array_equal(out, np.zeros(8))


def test_wingrock_euler_step_matches_scalar_script():
    sc = WingRockScenario()
    model = sc.model()
    w = np.asarray(PAPER_WEIGHTS)
    out = augmented_transition(model, np.r_[10.0, 5.0, w], np.array([0.0]))
    theta, p = wingrock_euler_step(10.0, 5.0, 0.0, w, 3.0, sc.dt)
    np.testing.assert_allclose(out[:2], [theta, p], rtol=0, atol=1e-12)
    out = augmented_transition(model, np.r_[-4.0, 2.5, w], np.array([7.0]))
    theta, p = wingrock_euler_step(-4.0, 2.5, 7.0, w, 3.0, sc.dt)
    np.testing.assert_allclose(out[:2], [theta, p], rtol=0, atol=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_transition_non_finite_raises():
    model = WingRockScenario().model()
    with pytest.raises(NonFinite):
        augmented_transition(model, np.r_[1e200, 0, 0, 0, 0, 0, 0, 1.0], np.array([0.0]))


def test_basis_deterministic():
    basis = WingRockScenario().model().basis
    X = np.array([[1.5], [-2.0]])
    assert np.array_equal(basis(X, [0.0]), basis(X, [0.0]))


def test_model_rejects_bad_shapes():
    basis = BasisLibrary(("a",), lambda X, u: X[:1])
    kw = dict(transition=lambda X, u, f: X, observe=lambda X: X[:1], dt=0.1)
    with pytest.raises(ValueError):
        ParametricModel(Dims(2, 0, 1, 2), basis, Q=np.eye(2), R=np.eye(1), **kw)
    with pytest.raises(ValueError):
        ParametricModel(Dims(2, 0, 1, 1), basis, Q=np.eye(3), R=np.eye(1), **kw)
    with pytest.raises(NotPositiveDefinite):
        ParametricModel(Dims(2, 0, 1, 1), basis, Q=np.eye(2), R=np.zeros((1, 1)), **kw)
    with pytest.raises(ValueError):
        ParametricModel(Dims(2, 0, 1, 1), basis, Q=np.eye(2), R=np.eye(1),
                        transition=kw["transition"], observe=kw["observe"], dt=0.0)


def test_noise_factors_reproduce_and_pad():
    model = WingRockScenario().model()
    nf = NoiseFactors.from_model(model)
    assert nf.Q_sqrt.shape == (8, 8)
    np.testing.assert_allclose(nf.Q_sqrt @ nf.Q_sqrt.T, np.pad(model.Q, ((0, 6), (0, 6))), atol=1e-12)
    np.testing.assert_allclose(nf.R_sqrt @ nf.R_sqrt.T, model.R, atol=1e-12)


def test_noise_factors_singular_q():
    basis = BasisLibrary(("a",), lambda X, u: X[:1])
    Q = np.diag([0.0, 0.3])
    model = ParametricModel(Dims(2, 0, 1, 1), basis, lambda X, u, f: X,
                            lambda X: X[:1], 0.1, Q, np.eye(1))
    nf = model.noise_factors()
    np.testing.assert_allclose(nf.Q_sqrt[:2, :2] @ nf.Q_sqrt[:2, :2].T, Q, atol=1e-12)


def test_initial_belief_identity():
    b = initial_belief(np.zeros(2), np.eye(2), np.zeros(3), np.ones(3))
    np.testing.assert_array_equal(b.U, np.eye(5))


def test_initial_belief_round_trip():
    rng = np.random.default_rng(3)
    mu0, m0 = rng.standard_normal(2), rng.standard_normal(6)
    P0, S0 = random_spd(rng, 2), rng.uniform(0.5, 10, 6)
    b = initial_belief(mu0, P0, m0, S0)
    mu, m, P, V, S = belief_blocks(b, Dims(2, 1, 1, 6))
    np.testing.assert_allclose(mu, mu0, atol=1e-12)
    np.testing.assert_allclose(m, m0, atol=1e-12)
    np.testing.assert_allclose(P, P0, atol=1e-12)
    np.testing.assert_allclose(S, np.diag(S0), atol=1e-12)
    assert np.array_equal(V, np.zeros((2, 6)))


def test_initial_belief_rejects_nonpositive_prior():
    with pytest.raises(ValueError):
        initial_belief(np.zeros(1), np.eye(1), np.zeros(2), np.array([1.0, 0.0]))


def test_blocks_tile_dense_covariance():
    rng = np.random.default_rng(4)
    U = np.linalg.cholesky(random_spd(rng, 7))
    from ski.model import GaussianBelief
    b = GaussianBelief(xi=rng.standard_normal(7), U=U)
    mu, m, P, V, S = belief_blocks(b, Dims(3, 0, 1, 4))
    Sigma = U @ U.T
    np.testing.assert_array_equal(np.block([[P, V], [V.T, Sigma[3:, 3:]]]), Sigma)
    np.testing.assert_array_equal(S, S.T)
    np.linalg.cholesky(S)
