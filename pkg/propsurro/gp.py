"""
Exact Gaussian-process regression with an ARD Matern-3/2 kernel.

The kernel follows k(r) = s^2 (1 + a*d) exp(-a*d) with d the lengthscale
scaled distance. a = sqrt(6) is the default form; sqrt3_variant switches to
the textbook sqrt(3). Hyperparameters are fitted on standardized inputs and
targets by maximizing the log marginal likelihood in log-parameter space.
"""
import json
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

import dataset
import numerics
from dataset import FEATURES, Prediction, Standardizer
from errors import DimensionMismatch, ModelFileError, NotPositiveDefinite, PreconditionViolation

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

JITTER_START = 1e-8
JITTER_MAX = 1e-2

LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_SD_BOUNDS = (1e-3, 1e2)
NOISE_BOUNDS = (1e-12, 1.0)
INITIAL_NOISE = 1e-4

# hyperparameter search
SCREEN_SIZE = 400
FIT_MAX_ITER = 200
FIT_GTOL = 1e-6
FIT_FTOL = 1e-12


def kernel_constant(sqrt3_variant=False):
	return np.sqrt(3.0) if sqrt3_variant else np.sqrt(6.0)


@dataclass(frozen=True)
class KernelParams:
	lengthscales: np.ndarray
	signal_sd: float
	noise_variance: float = 0.0

	def __post_init__(self):
		l = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
		object.__setattr__(self, 'lengthscales', l)
		if np.any(l <= 0) or not self.signal_sd > 0:
			raise PreconditionViolation('Bad kernel parameters', 'lengthscales and signal_sd must be positive')
		if self.noise_variance < 0:
			raise PreconditionViolation('Bad kernel parameters', 'noise_variance must be non-negative')

	@property
	def dim(self):
		return len(self.lengthscales)

	def to_log_vector(self):
		return np.concatenate([np.log(self.lengthscales), [np.log(self.signal_sd), np.log(self.noise_variance)]])

	@classmethod
	def from_log_vector(cls, v):
		v = np.asarray(v, dtype=float)
		return cls(np.exp(v[:-2]), float(np.exp(v[-2])), float(np.exp(v[-1])))

	def to_dict(self):
		return {'lengthscales': self.lengthscales.tolist(), 'signal_sd': self.signal_sd,
			'noise_variance': self.noise_variance}

	@classmethod
	def from_dict(cls, doc):
		return cls(np.array(doc['lengthscales'], dtype=float), float(doc['signal_sd']), float(doc['noise_variance']))


def log_bounds(dim):
	return ([tuple(np.log(LENGTHSCALE_BOUNDS))] * dim
		+ [tuple(np.log(SIGNAL_SD_BOUNDS)), tuple(np.log(NOISE_BOUNDS))])


#------------------------ kernel ------------------------#
def matern32(r, params, sqrt3_variant=False):
	r = np.atleast_1d(np.asarray(r, dtype=float))
	if r.shape != params.lengthscales.shape:
		raise DimensionMismatch(params.lengthscales.shape, r.shape)
	a = kernel_constant(sqrt3_variant)
	s = np.sqrt(np.sum((r / params.lengthscales) ** 2))
	return float(params.signal_sd ** 2 * (1.0 + a * s) * np.exp(-a * s))


def _scaled_sq_diffs(X1, X2, lengthscales):
	"""Per-dimension (r_j / l_j)^2, shape (d, n1, n2)."""
	diff = (X1[:, None, :] - X2[None, :, :]) / lengthscales
	return np.moveaxis(diff ** 2, -1, 0)


def kernel_matrix(X1, X2, params, sqrt3_variant=False):
	a = kernel_constant(sqrt3_variant)
	s = np.sqrt(np.sum(_scaled_sq_diffs(X1, X2, params.lengthscales), axis=0))
	return params.signal_sd ** 2 * (1.0 + a * s) * np.exp(-a * s)


def _kernel_and_grads(X, params, sqrt3_variant=False):
	"""K and dK/dlog(l_j) for every j, plus dK/dlog(signal_sd)."""
	a = kernel_constant(sqrt3_variant)
	sq = _scaled_sq_diffs(X, X, params.lengthscales)
	s = np.sqrt(np.sum(sq, axis=0))
	decay = np.exp(-a * s)
	K = params.signal_sd ** 2 * (1.0 + a * s) * decay
	# dk/ds = -s2 a^2 s e^{-as} and ds/dlog l_j = -(r_j/l_j)^2 / s
	dK_dlog_l = [params.signal_sd ** 2 * a ** 2 * decay * sq_j for sq_j in sq]
	return K, dK_dlog_l, 2.0 * K


def jittered_cholesky(A):
	"""Cholesky of A, adding escalating diagonal jitter if A is numerically singular."""
	try:
		return numerics.cholesky(A), 0.0
	except NotPositiveDefinite as first:
		failure = first
	base = np.mean(np.diag(A))
	if not base > 0:
		raise failure
	jitter = JITTER_START
	while jitter <= JITTER_MAX * (1 + 1e-9):
		try:
			chol = numerics.cholesky(A + jitter * base * np.eye(len(A)))
			log.warning("Added jitter %.1e x mean(diag K) to reach positive definiteness", jitter)
			return chol, jitter * base
		except NotPositiveDefinite as ex:
			failure = ex
		jitter *= 10.0
	raise failure


#------------------------ likelihood ------------------------#
def log_marginal_likelihood(X, y, params, sqrt3_variant=False):
	"""
	Log marginal likelihood and its gradient over
	[log l_1..log l_d, log signal_sd, log noise_variance].
	"""
	X = np.asarray(X, dtype=float)
	y = np.asarray(y, dtype=float)
	n = len(y)
	if n < 1:
		raise PreconditionViolation('Empty training set', 'log marginal likelihood needs n >= 1')
	if X.shape[1] != params.dim:
		raise DimensionMismatch(params.dim, X.shape[1])
	K, dK_l, dK_s = _kernel_and_grads(X, params, sqrt3_variant)
	Ky = K + params.noise_variance * np.eye(n)
	chol, _ = jittered_cholesky(Ky)
	alpha = chol.solve(y)
	value = -0.5 * y @ alpha - 0.5 * chol.logdet() - 0.5 * n * np.log(2 * np.pi)

	W = np.outer(alpha, alpha) - chol.inverse()
	grad = [0.5 * np.sum(W * dK) for dK in dK_l]
	grad.append(0.5 * np.sum(W * dK_s))
	grad.append(0.5 * np.trace(W) * params.noise_variance)
	return float(value), np.array(grad)


#------------------------ model ------------------------#
@dataclass(frozen=True)
class GpModel:
	X: np.ndarray
	y: np.ndarray
	params: KernelParams
	chol: numerics.CholeskyFactor
	alpha: np.ndarray
	x_std: Standardizer
	y_std: Standardizer
	features: Tuple[str, ...] = FEATURES
	sqrt3_variant: bool = False
	jitter: float = 0.0

	@property
	def dim(self):
		return self.X.shape[1]

	@property
	def lengthscales_raw(self):
		"""Lengthscales in the units of the raw input features."""
		return self.params.lengthscales * self.x_std.sd

	@property
	def signal_sd_raw(self):
		return self.params.signal_sd * float(self.y_std.sd[0])

	def predict(self, Xq, include_noise=True):
		return predict(self, Xq, include_noise=include_noise)


def condition(X, y, params, features=FEATURES, sqrt3_variant=False, x_std=None, y_std=None):
	"""
	Builds a GpModel at fixed hyperparameters (given in standardized units).
	Standardizers are fitted on X and y unless supplied.
	"""
	X = np.asarray(X, dtype=float)
	y = np.asarray(y, dtype=float).ravel()
	if X.ndim == 1:
		X = X[:, None]
	features = tuple(features)
	if X.shape[1] != len(features):
		raise DimensionMismatch(len(features), X.shape[1])
	if x_std is None:
		x_std = dataset.standardizer_from_array(X, features)
	if y_std is None:
		y_std = dataset.standardizer_from_array(y[:, None], (dataset.TARGET,))
	Xs = x_std.transform(X)
	ys = y_std.transform(y[:, None])[:, 0]
	K = kernel_matrix(Xs, Xs, params, sqrt3_variant) + params.noise_variance * np.eye(len(ys))
	chol, jitter = jittered_cholesky(K)
	alpha = chol.solve(ys)
	return GpModel(Xs, ys, params, chol, alpha, x_std, y_std, features, sqrt3_variant, jitter)


def fit_arrays(X, y, features, seed=0, restarts=10, sqrt3_variant=False):
	"""
	Maximizes the log marginal likelihood from restarts starting points.
	Above SCREEN_SIZE points the restarts run on a seeded random subset of
	SCREEN_SIZE points and only the winner is refined on the full data.
	"""
	X = np.asarray(X, dtype=float)
	y = np.asarray(y, dtype=float).ravel()
	if len(y) == 0:
		raise PreconditionViolation('Empty training set', 'gp fit needs at least one point')
	features = tuple(features)
	x_std = dataset.standardizer_from_array(X, features)
	y_std = dataset.standardizer_from_array(y[:, None], (dataset.TARGET,))
	Xs = x_std.transform(X)
	ys = y_std.transform(y[:, None])[:, 0]
	n, d = Xs.shape

	def objective_on(Xo, yo):
		def objective(theta):
			value, grad = log_marginal_likelihood(Xo, yo, KernelParams.from_log_vector(theta), sqrt3_variant)
			return -value, -grad
		return objective

	x0 = KernelParams(np.ones(d), 1.0, INITIAL_NOISE).to_log_vector()
	bounds = log_bounds(d)
	tolerances = {'max_iter': FIT_MAX_ITER, 'gtol': FIT_GTOL, 'ftol': FIT_FTOL}
	log.info("Fitting GP on %d points, %d inputs, %d restarts", n, d, restarts)
	if n > SCREEN_SIZE:
		idx = np.sort(numerics.make_rng(seed).choice(n, SCREEN_SIZE, replace=False))
		x0, _ = numerics.lbfgs_minimize(objective_on(Xs[idx], ys[idx]), x0, restarts=restarts, seed=seed,
			bounds=bounds, **tolerances)
		log.info("Restarts screened on %d of %d points; refining the best on all points", SCREEN_SIZE, n)
		restarts = 1
	theta, nlml = numerics.lbfgs_minimize(objective_on(Xs, ys), x0, restarts=restarts, seed=seed, bounds=bounds,
		**tolerances)
	params = KernelParams.from_log_vector(theta)
	log.info("GP fit done: -lml=%.6g lengthscales=%s signal_sd=%.4g noise=%.3g",
		nlml, np.array2string(params.lengthscales, precision=4), params.signal_sd, params.noise_variance)
	return condition(X, y, params, features, sqrt3_variant, x_std, y_std)


def fit(train, seed=0, restarts=10, features=FEATURES, sqrt3_variant=False):
	if len(train) == 0:
		raise PreconditionViolation('Empty training set', 'gp fit needs at least one point')
	return fit_arrays(train.features(features), train.targets(), features, seed, restarts, sqrt3_variant)


def _as_query(model, Xq):
	Xq = np.asarray(Xq, dtype=float)
	if Xq.ndim == 1:
		Xq = Xq[None, :]
	if Xq.ndim != 2 or Xq.shape[1] != model.dim:
		raise DimensionMismatch(model.dim, Xq.shape[-1] if Xq.ndim else 0)
	return Xq


def predict(model, Xq, include_noise=True):
	"""
	Posterior mean and variance at raw query inputs (rows of Xq), returned in
	raw target units. include_noise adds the learned noise variance.
	"""
	Xs = model.x_std.transform(_as_query(model, Xq))
	Ks = kernel_matrix(Xs, model.X, model.params, model.sqrt3_variant)
	mean = Ks @ model.alpha
	v = model.chol.solve_lower(Ks.T)
	var = model.params.signal_sd ** 2 - np.sum(v * v, axis=0)
	if np.any(var < 0):
		log.warning("Clamped %d negative posterior variance(s), worst %.3g", int(np.sum(var < 0)), float(np.min(var)))
		var = np.maximum(var, 0.0)
	if include_noise:
		var = var + model.params.noise_variance
	mean = model.y_std.inverse_transform(mean[:, None])[:, 0]
	var = model.y_std.inverse_variance(var[:, None])[:, 0]
	return Prediction(mean, var)


#------------------------ serialization ------------------------#
def to_dict(model):
	return {
		'kind': 'gp',
		'format_version': FORMAT_VERSION,
		'd': model.dim,
		'n': len(model.y),
		'features': list(model.features),
		'sqrt3_variant': model.sqrt3_variant,
		'X': model.x_std.inverse_transform(model.X).tolist(),
		'y': model.y_std.inverse_transform(model.y[:, None])[:, 0].tolist(),
		'params': model.params.to_dict(),
		'x_std': model.x_std.to_dict(),
		'y_std': model.y_std.to_dict(),
	}


def from_dict(doc):
	if doc.get('kind') != 'gp':
		raise ModelFileError('Wrong model kind', 'expected gp, got %r' % doc.get('kind'))
	if doc.get('format_version') != FORMAT_VERSION:
		raise ModelFileError('Unsupported model version', 'expected %d, got %r' % (FORMAT_VERSION, doc.get('format_version')))
	try:
		return condition(np.array(doc['X'], dtype=float), np.array(doc['y'], dtype=float),
			KernelParams.from_dict(doc['params']), tuple(doc['features']), bool(doc['sqrt3_variant']),
			Standardizer.from_dict(doc['x_std']), Standardizer.from_dict(doc['y_std']))
	except KeyError as ex:
		raise ModelFileError('Malformed model file', 'missing field %s' % ex)


def save(model, path):
	with open(path, 'w', encoding='utf-8') as fh:
		json.dump(to_dict(model), fh)
	log.info("Saved GP model to %s", path)


def load(path):
	try:
		with open(path, encoding='utf-8') as fh:
			doc = json.load(fh)
	except (OSError, ValueError) as ex:
		raise ModelFileError('Unreadable model file', str(ex))
	return from_dict(doc)
