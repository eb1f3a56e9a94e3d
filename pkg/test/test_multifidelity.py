import numpy as np
import pytest

import gp
import multifidelity
import synthdata
from dataset import DataPoint, Dataset, Fidelity
from errors import DimensionMismatch, PreconditionViolation
from generative import Architecture, TrainConfig
from gp import KernelParams
from multifidelity import FidelityPair, ModelSettings

SMALL = Architecture((16, 16), (16, 16), (16,))
FAST_GP = ModelSettings(kind='gp', restarts=2, nargp_samples=200)


def curve(values, fidelity, pressure=2.0, carbon_count=12):
	return Dataset(tuple(DataPoint(pressure, t, carbon_count, float(r), fidelity) for t, r in values))


def low_high(n_low, n_high, low_fn, high_fn):
	T_low = np.linspace(320.0, 900.0, n_low)
	T_high = np.linspace(330.0, 890.0, n_high)
	low = curve(zip(T_low, low_fn(T_low)), Fidelity.LOW)
	high = curve(zip(T_high, high_fn(T_high)), Fidelity.HIGH)
	return FidelityPair(low, high, ('temperature',))


def smooth(T):
	return 800.0 - 0.5 * (T - 320.0) + 15.0 * np.sin(T / 50.0)


@pytest.fixture
def pair():
	return low_high(15, 6, smooth, lambda T: 1.05 * smooth(T) - 10.0)


# -------------------- fidelity pair --------------------#
def test_pair_needs_both_levels(pair):
	with pytest.raises(PreconditionViolation):
		FidelityPair(pair.low, Dataset(()), ('temperature',))
	with pytest.raises(PreconditionViolation):
		FidelityPair(Dataset(()), pair.high, ('temperature',))


def test_pool_moments():
	mean, var = multifidelity.pool_moments(np.array([[1.0, 3.0]]), np.array([[1.0, 1.0]]))
	assert np.allclose(mean, [2.0]) and np.allclose(var, [2.0])


# -------------------- NARGP --------------------#
def test_nargp_fit_and_predict(pair):
	model = multifidelity.nargp_fit(pair, seed=0, restarts=2)
	assert model.high_gp.dim == 2
	assert model.high_gp.features == ('temperature', multifidelity.LOW_FIDELITY_INPUT)
	Xq = np.linspace(340.0, 880.0, 9)[:, None]
	pred = multifidelity.nargp_predict(model, Xq, n_samples=200, seed=1)
	assert pred.mean.shape == (9,) and np.all(pred.variance >= 0)
	again = multifidelity.nargp_predict(model, Xq, n_samples=200, seed=1)
	assert np.array_equal(pred.mean, again.mean)


def test_nargp_exact_low_level_reduces_to_high_gp():
	X = np.linspace(0.0, 1.0, 6)[:, None]
	low_gp = gp.condition(X, 2.0 + X[:, 0] ** 2, KernelParams([0.5], 1.0, 0.0), ('temperature',))
	XH = np.column_stack([X[:, 0], gp.predict(low_gp, X, include_noise=False).mean])
	high_gp = gp.condition(XH, 3.0 * XH[:, 1] - X[:, 0], KernelParams([0.7, 0.7], 1.0, 1e-4),
		('temperature', multifidelity.LOW_FIDELITY_INPUT))
	model = multifidelity.NargpModel(low_gp, high_gp)
	x_star = X[2:3]
	direct = gp.predict(high_gp, np.column_stack([x_star, gp.predict(low_gp, x_star, include_noise=False).mean]))
	pooled = multifidelity.nargp_predict(model, x_star, n_samples=50)
	assert np.allclose(pooled.mean, direct.mean, rtol=1e-6)
	assert np.allclose(pooled.variance, direct.variance, rtol=1e-3)


def test_nargp_matches_nested_monte_carlo():
	X = np.array([[0.0], [0.3], [0.55], [1.0]])
	low_gp = gp.condition(X, 5.0 + np.sin(3 * X[:, 0]), KernelParams([0.4], 1.0, 1e-3), ('temperature',))
	Xg = np.linspace(0.0, 1.0, 8)[:, None]
	low_mean = gp.predict(low_gp, Xg, include_noise=False).mean
	XH = np.column_stack([Xg[:, 0], low_mean])
	high_gp = gp.condition(XH, 2.0 * low_mean ** 2 - Xg[:, 0], KernelParams([0.8, 0.6], 1.0, 1e-3),
		('temperature', multifidelity.LOW_FIDELITY_INPUT))
	model = multifidelity.NargpModel(low_gp, high_gp)
	Xq = np.array([[0.15], [0.8]])
	pooled = multifidelity.nargp_predict(model, Xq, n_samples=200000, seed=0)

	# draw the low level, then one high-level value per draw
	rng = np.random.default_rng(99)
	low = gp.predict(low_gp, Xq, include_noise=False)
	for i, x in enumerate(Xq[:, 0]):
		u = low.mean[i] + low.sd[i] * rng.standard_normal(100000)
		high = gp.predict(high_gp, np.column_stack([np.full_like(u, x), u]))
		values = high.mean + high.sd * rng.standard_normal(len(u))
		assert abs(pooled.mean[i] - values.mean()) < 0.02 * abs(values.mean())
		assert abs(pooled.variance[i] - values.var()) < 0.02 * values.var()


def test_nargp_dimension_check():
	X = np.linspace(0.0, 1.0, 4)[:, None]
	low_gp = gp.condition(X, X[:, 0] + 1, KernelParams([0.5], 1.0, 1e-4), ('temperature',))
	with pytest.raises(DimensionMismatch):
		multifidelity.NargpModel(low_gp, low_gp)


@pytest.mark.slow
def test_nargp_benchmark():
	rng = np.random.default_rng(0)

	def f_low(x):
		return np.sin(8 * np.pi * x)

	def f_high(x):
		return (x - np.sqrt(2)) * f_low(x) ** 2

	x_low = np.sort(rng.uniform(0, 1, 50))
	x_high = np.sort(rng.choice(x_low, 14, replace=False))
	as_points = lambda xs, fn, fid: Dataset(tuple(DataPoint(1.0, 300.0 + 100 * x, 12, 10.0 + fn(x), fid) for x in xs))
	pair = FidelityPair(as_points(x_low, f_low, Fidelity.LOW), as_points(x_high, f_high, Fidelity.HIGH), ('temperature',))
	model = multifidelity.nargp_fit(pair, seed=0, restarts=10)
	xq = np.linspace(0, 1, 200)
	pred = multifidelity.nargp_predict(model, (300.0 + 100 * xq)[:, None], n_samples=1000)
	truth = 10.0 + f_high(xq)
	rmse = np.sqrt(np.mean((pred.mean - truth) ** 2))
	assert rmse < 0.05 * (truth.max() - truth.min())


@pytest.mark.slow
def test_nargp_identity_correlation():
	pair = low_high(60, 12, smooth, smooth)
	model = multifidelity.nargp_fit(pair, seed=0, restarts=5)
	Xq = np.linspace(340.0, 880.0, 25)[:, None]
	nargp = multifidelity.nargp_predict(model, Xq, n_samples=1000)
	single = gp.predict(model.low_gp, Xq)
	assert np.allclose(nargp.mean, single.mean, rtol=1e-3)


# -------------------- multi-fidelity generative --------------------#
def test_mf_generative_smoke(pair):
	cfg = TrainConfig(steps=60, learning_rate=1e-3, disc_per_gen='1:5')
	model = multifidelity.mf_generative_fit(pair, SMALL, cfg, restarts=2)
	assert model.core.dim == 2
	assert model.core.history['gen_updates'] == 50
	pred = multifidelity.mf_generative_predict(model, np.array([[400.0], [600.0]]), n_samples=100)
	assert np.all(np.isfinite(pred.mean))


@pytest.mark.slow
def test_mf_generative_identity_correlation():
	pair = low_high(40, 20, smooth, smooth)
	cfg = TrainConfig(steps=20000, disc_per_gen='1:5')
	model = multifidelity.mf_generative_fit(pair, Architecture(), cfg, restarts=5)
	Xq = np.linspace(340.0, 880.0, 25)[:, None]
	proxy = gp.predict(model.low_proxy, Xq, include_noise=False).mean
	pred = multifidelity.mf_generative_predict(model, Xq, n_samples=2000)
	assert np.all(np.abs(pred.mean - proxy) / proxy < 0.02)


# -------------------- experiments --------------------#
@pytest.fixture
def fusion_inputs():
	params = synthdata.OracleParams()
	base = synthdata.generate_table([3.0, 10.0], np.arange(320.0, 901.0, 40.0), [12], params)
	high = synthdata.high_fidelity(params)
	nist = synthdata.generate_table([2.0], synthdata.FUSION_TEMPERATURES, [12], high, Fidelity.HIGH)
	reference = synthdata.generate_table([2.0], np.arange(600.0, 761.0, 20.0), [12], high, Fidelity.HIGH)
	return base, nist, reference


def test_report_rows():
	reference = curve([(600.0, 400.0), (620.0, 200.0)], Fidelity.HIGH)
	pred = multifidelity.Prediction(np.array([440.0, 190.0]), np.array([4.0, 1.0]))
	rows = multifidelity.report_rows('gp', 2, reference, pred)
	assert [tuple(r) for r in rows] == [multifidelity.REPORT_COLUMNS] * 2
	assert np.isclose(rows[0]['rel_error'], 0.1) and np.isclose(rows[1]['rel_error'], 0.05)
	assert rows[0]['sd'] == 2.0


def test_zero_arm_equals_baseline(fusion_inputs):
	base, nist, reference = fusion_inputs
	report = multifidelity.fusion_study(base, nist, reference, FAST_GP, arms=(0, 1))
	features = ('pressure', 'temperature')
	baseline = gp.fit(base, FAST_GP.seed, FAST_GP.restarts, features)
	expected = gp.predict(baseline, reference.features(features)).mean
	zero_rows = [r for r in report.rows if r['n_added'] == 0]
	assert np.allclose([r['mean'] for r in zero_rows], expected)
	assert [s['n_added'] for s in report.summary] == [0, 1]
	assert not report.failures


def test_fusion_arm_failures_recorded(fusion_inputs):
	base, nist, reference = fusion_inputs
	report = multifidelity.fusion_study(base, nist, reference, ModelSettings(kind='bogus'), arms=(0, 3))
	assert [n for n, _ in report.failures] == [0, 3]
	assert report.rows == [] and report.summary == []


def test_fusion_arm_beyond_nist_points(fusion_inputs):
	base, nist, reference = fusion_inputs
	report = multifidelity.fusion_study(base, nist, reference, FAST_GP, arms=(0, 5))
	assert [n for n, _ in report.failures] == [5]
	assert 'only 3 NIST points' in report.failures[0][1]
	assert {r['n_added'] for r in report.rows} == {0}
	assert [s['n_added'] for s in report.summary] == [0]


def test_fusion_anchors_never_lose_accuracy(fusion_inputs):
	base, nist, reference = fusion_inputs
	report = multifidelity.fusion_study(base, nist, reference, FAST_GP)
	assert not report.failures
	assert report.anchor_violations == []


def test_mf_experiment_rows(fusion_inputs):
	_, _, reference = fusion_inputs
	params = synthdata.OracleParams()
	low = synthdata.generate_table([2.0], synthdata.MF_TEMPERATURES, [12], params)
	high = synthdata.generate_table([2.0], synthdata.MF_TEMPERATURES, [12], synthdata.high_fidelity(params), Fidelity.HIGH)
	pair = FidelityPair(low, high, ('temperature',))
	settings = ModelSettings(kind='gen', restarts=2, arch=SMALL, train=TrainConfig(steps=30, learning_rate=1e-3),
		n_samples=50, nargp_samples=100)
	report = multifidelity.mf_experiment(pair, reference, settings)
	assert [s['model'] for s in report.summary] == ['nargp', 'mf_gen']
	assert all(s['n_added'] == 7 for s in report.summary)
	assert len(report.rows) == 2 * len(reference)
