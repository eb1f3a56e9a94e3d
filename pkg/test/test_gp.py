import dataclasses
import json
import logging

import numpy as np
import pytest

import dataset
import gp
from dataset import DataPoint, Dataset
from errors import ModelFileError, NotPositiveDefinite, ZeroVariance
from gp import KernelParams


@pytest.fixture
def rng():
	return np.random.default_rng(42)


def dense_posterior(model, Xq):
	"""Posterior in raw units from an explicit inverse of the training covariance."""
	p = model.params
	K = gp.kernel_matrix(model.X, model.X, p, model.sqrt3_variant) + p.noise_variance * np.eye(len(model.y))
	Ks = gp.kernel_matrix(model.x_std.transform(Xq), model.X, p, model.sqrt3_variant)
	Kinv = np.linalg.inv(K)
	mean = Ks @ Kinv @ model.y
	var = p.signal_sd ** 2 - np.einsum('ij,jk,ik->i', Ks, Kinv, Ks) + p.noise_variance
	ysd, ymean = model.y_std.sd[0], model.y_std.mean[0]
	return mean * ysd + ymean, var * ysd ** 2


# -------------------- kernel --------------------#
def test_kernel_at_zero():
	params = KernelParams([0.7, 2.0], 1.7)
	assert np.isclose(gp.matern32(np.zeros(2), params), 1.7 ** 2)


kernel_data = [
	(False, (1 + np.sqrt(6)) * np.exp(-np.sqrt(6))),
	(True, (1 + np.sqrt(3)) * np.exp(-np.sqrt(3))),
]


@pytest.mark.parametrize("sqrt3_variant, expected", kernel_data)
def test_kernel_unit_distance(sqrt3_variant, expected):
	value = gp.matern32(np.array([1.0]), KernelParams([1.0], 1.0), sqrt3_variant)
	assert np.isclose(value, expected, rtol=1e-14)


def test_kernel_sqrt6_value():
	assert abs(gp.matern32(np.array([1.0]), KernelParams([1.0], 1.0)) - 0.2978) < 1e-4


def test_kernel_decays():
	params = KernelParams([1.0], 1.0)
	values = [gp.matern32(np.array([r]), params) for r in np.linspace(0.0, 10.0, 50)]
	assert all(a > b for a, b in zip(values, values[1:]))
	assert values[-1] < 1e-9


def test_kernel_matrix_symmetric(rng):
	X = rng.standard_normal((8, 3))
	K = gp.kernel_matrix(X, X, KernelParams([0.5, 1.0, 2.0], 1.3))
	assert np.allclose(K, K.T)
	assert np.allclose(np.diag(K), 1.3 ** 2)


# -------------------- likelihood --------------------#
def test_lml_single_point():
	sigma, y = 1.3, 0.7
	value, _ = gp.log_marginal_likelihood(np.zeros((1, 1)), np.array([y]), KernelParams([1.0], sigma))
	expected = -0.5 * np.log(sigma ** 2) - y ** 2 / (2 * sigma ** 2) - 0.5 * np.log(2 * np.pi)
	assert np.isclose(value, expected, rtol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_lml_gradient(seed):
	rng = np.random.default_rng(seed)
	X = rng.uniform(-2, 2, size=(20, 2))
	y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(20)
	theta0 = KernelParams(rng.uniform(0.3, 2.0, 2), rng.uniform(0.5, 2.0), rng.uniform(1e-3, 1e-1)).to_log_vector()

	def f(theta):
		return gp.log_marginal_likelihood(X, y, KernelParams.from_log_vector(theta))
	assert gp.numerics.check_gradient(f, theta0, h=1e-6) < 1e-5


def naive_lml(X, y, params):
	"""Value and gradient from np.linalg.inv and an elementwise kernel derivative."""
	n, d = X.shape
	a = np.sqrt(6.0)
	r = [(X[:, j, None] - X[None, :, j]) / params.lengthscales[j] for j in range(d)]
	s = np.sqrt(sum(rj ** 2 for rj in r))
	K = params.signal_sd ** 2 * (1 + a * s) * np.exp(-a * s)
	Ky = K + params.noise_variance * np.eye(n)
	Kinv = np.linalg.inv(Ky)
	alpha = Kinv @ y
	value = -0.5 * y @ alpha - 0.5 * np.linalg.slogdet(Ky)[1] - 0.5 * n * np.log(2 * np.pi)
	derivs = [params.signal_sd ** 2 * a ** 2 * np.exp(-a * s) * rj ** 2 for rj in r]
	derivs += [2 * K, params.noise_variance * np.eye(n)]
	grad = [0.5 * np.trace((np.outer(alpha, alpha) - Kinv) @ dK) for dK in derivs]
	return value, np.array(grad)


@pytest.mark.parametrize("n", [1, 5, 20, 50])
def test_lml_matches_direct_inverse(n):
	rng = np.random.default_rng(100 + n)
	X = rng.uniform(-1, 1, size=(n, 2))
	y = np.cos(2 * X[:, 0]) - X[:, 1] + 0.05 * rng.standard_normal(n)
	params = KernelParams([0.6, 1.3], 1.1, 1e-2)
	value, grad = gp.log_marginal_likelihood(X, y, params)
	expected_value, expected_grad = naive_lml(X, y, params)
	assert np.isclose(value, expected_value, rtol=1e-9, atol=1e-9)
	assert np.allclose(grad, expected_grad, rtol=1e-9, atol=1e-9 * np.max(np.abs(expected_grad)))


def test_duplicate_points_need_jitter():
	X = np.array([[0.0], [0.0], [1.0]])
	K = gp.kernel_matrix(X, X, KernelParams([1.0], 1.0))
	with pytest.raises(NotPositiveDefinite):
		gp.numerics.cholesky(K)
	chol, jitter = gp.jittered_cholesky(K)
	assert jitter > 0
	assert chol.dimension == 3


# -------------------- posterior --------------------#
def test_posterior_matches_dense_inverse(rng):
	X = rng.uniform(0, 5, size=(5, 1))
	y = np.cos(X[:, 0]) * 30 + 700
	model = gp.condition(X, y, KernelParams([0.8], 1.1, 1e-2), ('temperature',))
	Xq = rng.uniform(-1, 6, size=(7, 1))
	pred = gp.predict(model, Xq)
	mean, var = dense_posterior(model, Xq)
	assert np.allclose(pred.mean, mean, rtol=1e-9)
	assert np.allclose(pred.variance, var, rtol=1e-9)


@pytest.mark.parametrize("n", [3, 17, 50])
def test_posterior_dense_oracle_sizes(n):
	rng = np.random.default_rng(n)
	X = rng.uniform(0, 1, size=(n, 3))
	y = X @ np.array([1.0, -2.0, 0.5]) + np.sin(3 * X[:, 0])
	model = gp.condition(X, y, KernelParams([0.6, 0.9, 1.4], 1.2, 5e-2), ('pressure', 'temperature', 'carbon_count'))
	Xq = rng.uniform(0, 1, size=(10, 3))
	pred = gp.predict(model, Xq)
	mean, var = dense_posterior(model, Xq)
	assert np.allclose(pred.mean, mean, rtol=1e-9)
	assert np.allclose(pred.variance, var, rtol=1e-9)


def test_noise_free_interpolation():
	X = np.linspace(0.0, 4.0, 5)[:, None]
	y = np.array([820.0, 790.0, 700.0, 450.0, 120.0])
	model = gp.condition(X, y, KernelParams([0.5], 1.0, 0.0), ('temperature',))
	assert model.jitter == 0.0
	pred = gp.predict(model, X, include_noise=False)
	assert np.allclose(pred.mean, y, rtol=1e-6)
	assert np.all(pred.variance <= 1e-8 * model.signal_sd_raw ** 2)


def test_prior_reversion_far_away():
	X = np.linspace(0.0, 1.0, 6)[:, None]
	y = 3.0 * X[:, 0] + 10.0
	model = gp.condition(X, y, KernelParams([0.3], 1.5, 1e-3), ('temperature',))
	pred = gp.predict(model, np.array([[1e4]]))
	assert np.isclose(pred.mean[0], y.mean(), rtol=1e-9)
	expected_var = (1.5 ** 2 + 1e-3) * model.y_std.sd[0] ** 2
	assert np.isclose(pred.variance[0], expected_var, rtol=1e-9)


def test_latent_variance_excludes_noise():
	X = np.linspace(0.0, 1.0, 6)[:, None]
	model = gp.condition(X, X[:, 0] ** 2 + 1, KernelParams([0.3], 1.0, 0.04), ('temperature',))
	Xq = np.array([[0.25]])
	with_noise = gp.predict(model, Xq).variance[0]
	latent = gp.predict(model, Xq, include_noise=False).variance[0]
	assert np.isclose(with_noise - latent, 0.04 * model.y_std.sd[0] ** 2)


@pytest.mark.parametrize("seed", range(5))
def test_variance_bounded_by_prior(seed):
	rng = np.random.default_rng(seed)
	X = rng.uniform(0, 1, size=(12, 2))
	model = gp.condition(X, np.sin(5 * X[:, 0]) * X[:, 1], KernelParams([0.3, 0.8], 1.4, 1e-3), ('pressure', 'temperature'))
	pred = gp.predict(model, rng.uniform(-0.5, 1.5, size=(200, 2)))
	bound = (1.4 ** 2 + 1e-3) * model.y_std.sd[0] ** 2
	assert np.all(pred.variance <= bound * (1 + 1e-12))


def test_added_point_never_raises_variance(rng):
	features = ('pressure', 'temperature')
	X = rng.uniform(0, 1, size=(15, 2))
	y = X[:, 0] ** 2 + np.cos(3 * X[:, 1])
	params = KernelParams([0.4, 0.5], 1.0, 1e-4)
	x_std = dataset.standardizer_from_array(X, features)
	y_std = dataset.standardizer_from_array(y[:, None], (dataset.TARGET,))
	Xq = rng.uniform(0, 1, size=(100, 2))
	variances = []
	for n in range(5, 16):
		model = gp.condition(X[:n], y[:n], params, features, x_std=x_std, y_std=y_std)
		variances.append(gp.predict(model, Xq, include_noise=False).variance)
	scale = 1e-12 * y_std.sd[0] ** 2
	for before, after in zip(variances, variances[1:]):
		assert np.all(after <= before + scale)


def test_training_order_invariance(rng):
	features = ('pressure', 'temperature', 'carbon_count')
	X = rng.uniform(0, 1, size=(25, 3))
	y = X @ np.array([2.0, -1.0, 0.3]) + np.sin(4 * X[:, 1])
	params = KernelParams([0.5, 0.7, 1.1], 1.2, 1e-3)
	order = rng.permutation(25)
	a = gp.condition(X, y, params, features)
	b = gp.condition(X[order], y[order], params, features)
	Xq = rng.uniform(0, 1, size=(30, 3))
	pa, pb = gp.predict(a, Xq), gp.predict(b, Xq)
	assert np.allclose(pa.mean, pb.mean, rtol=1e-10)
	assert np.allclose(pa.variance, pb.variance, rtol=1e-10)


def test_negative_variance_clamp_warns(caplog):
	X = np.linspace(0.0, 1.0, 6)[:, None]
	model = gp.condition(X, X[:, 0] + 2.0, KernelParams([0.5], 1.0, 1e-6), ('temperature',))
	# kernel rescaled against the stored factor drives the variance below zero
	broken = dataclasses.replace(model, params=KernelParams([0.5], 2.0, 1e-6))
	with caplog.at_level(logging.WARNING, logger='gp'):
		pred = gp.predict(broken, X, include_noise=False)
	assert np.all(pred.variance == 0.0)
	assert 'Clamped 6 negative posterior variance' in caplog.text


# -------------------- fit --------------------#
def test_fit_smooth_curve():
	T = np.linspace(320.0, 900.0, 20)
	points = tuple(DataPoint(3.0, t, 12, 800.0 - 0.4 * (t - 320) + 20 * np.sin(t / 60)) for t in T)
	model = gp.fit(Dataset(points), seed=0, restarts=3, features=('temperature',))
	Tq = (T[:-1] + T[1:]) / 2
	truth = 800.0 - 0.4 * (Tq - 320) + 20 * np.sin(Tq / 60)
	pred = gp.predict(model, Tq[:, None])
	assert np.max(np.abs(pred.mean - truth)) < 2.0


def test_fit_two_points():
	points = (DataPoint(3.0, 320.0, 12, 750.0), DataPoint(3.0, 400.0, 12, 700.0))
	model = gp.fit(Dataset(points), restarts=2, features=('temperature',))
	pred = gp.predict(model, np.array([[320.0], [400.0]]))
	assert np.all(np.isfinite(pred.mean)) and np.all(pred.variance >= 0)


def test_fit_constant_input():
	points = tuple(DataPoint(3.0, 320.0 + i, 12, 700.0 + i) for i in range(5))
	with pytest.raises(ZeroVariance):
		gp.fit(Dataset(points), restarts=1)


def test_fit_deterministic(rng):
	X = rng.uniform(0, 1, size=(15, 2))
	y = np.sin(4 * X[:, 0]) + X[:, 1]
	a = gp.fit_arrays(X, y, ('pressure', 'temperature'), seed=5, restarts=3)
	b = gp.fit_arrays(X, y, ('pressure', 'temperature'), seed=5, restarts=3)
	assert np.array_equal(a.params.to_log_vector(), b.params.to_log_vector())


def test_fit_screens_restarts_on_subset(rng, monkeypatch, caplog):
	monkeypatch.setattr(gp, 'SCREEN_SIZE', 20)
	X = rng.uniform(0, 1, size=(60, 1))
	y = np.sin(6 * X[:, 0]) + 0.01 * rng.standard_normal(60)
	with caplog.at_level(logging.INFO, logger='gp'):
		a = gp.fit_arrays(X, y, ('temperature',), seed=3, restarts=4)
	assert 'screened on 20 of 60 points' in caplog.text
	b = gp.fit_arrays(X, y, ('temperature',), seed=3, restarts=4)
	assert np.array_equal(a.params.to_log_vector(), b.params.to_log_vector())
	Xq = np.linspace(0.05, 0.95, 10)[:, None]
	assert np.max(np.abs(gp.predict(a, Xq).mean - np.sin(6 * Xq[:, 0]))) < 0.05


@pytest.mark.slow
def test_hyperparameter_recovery():
	rng = np.random.default_rng(7)
	X = np.sort(rng.uniform(0.0, 10.0, 200))[:, None]
	truth = KernelParams([0.5], 2.0)
	K = gp.kernel_matrix(X, X, truth) + 1e-8 * np.eye(200)
	y = np.linalg.cholesky(K) @ rng.standard_normal(200)
	model = gp.fit_arrays(X, y, ('temperature',), seed=0, restarts=5)
	assert abs(model.lengthscales_raw[0] / 0.5 - 1) < 0.3
	assert abs(model.signal_sd_raw / 2.0 - 1) < 0.3


# -------------------- serialization --------------------#
def test_model_document(tmp_path, rng):
	X = rng.uniform(0, 1, size=(6, 1))
	model = gp.condition(X, 5 * X[:, 0] + 1, KernelParams([0.4], 1.0, 1e-3), ('temperature',))
	path = str(tmp_path / 'gp.json')
	gp.save(model, path)
	reloaded = gp.load(path)
	Xq = np.array([[0.1], [0.9]])
	assert np.allclose(gp.predict(reloaded, Xq).mean, gp.predict(model, Xq).mean, rtol=1e-10)

	with open(path) as f:
		doc = json.load(f)
	doc['format_version'] = 99
	with pytest.raises(ModelFileError):
		gp.from_dict(doc)
