"""
Multi-fidelity learning over a low/high fidelity pair, and the data-fusion
experiments that concatenate trusted high-fidelity points into a
low-fidelity training set.

NARGP: a GP on low data, and a second GP over the augmented input
(x, mu_L(x)) trained on high data. Predictions propagate the low-level
uncertainty by sampling f_L(x*) and pooling the high-level posteriors.

MF generative: a GP proxy for the low-fidelity source and a conditional
generative model y_H = f(x, mu_proxy(x), z).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

import dataset
import generative
import gp
import metrics
import numerics
from dataset import FEATURES, Prediction
from errors import DimensionMismatch, PreconditionViolation, PropsurroError

log = logging.getLogger(__name__)

LOW_FIDELITY_INPUT = 'low_fidelity'
NARGP_SAMPLES = 1000
REPORT_COLUMNS = ('model', 'n_added', 'pressure_mpa', 'temperature_k', 'mean', 'sd', 'ref_value', 'rel_error')


@dataclass(frozen=True)
class FidelityPair:
	low: dataset.Dataset
	high: dataset.Dataset
	features: Tuple[str, ...] = FEATURES

	def __post_init__(self):
		if len(self.low) == 0 or len(self.high) == 0:
			raise PreconditionViolation('Empty fidelity level', 'low has %d points, high has %d' % (len(self.low), len(self.high)))
		object.__setattr__(self, 'features', tuple(self.features))

	@property
	def dim(self):
		return len(self.features)


def _augment(X, low_values):
	return np.hstack([np.asarray(X, dtype=float), np.asarray(low_values, dtype=float).reshape(-1, 1)])


#------------------------ NARGP ------------------------#
@dataclass(frozen=True)
class NargpModel:
	low_gp: gp.GpModel
	high_gp: gp.GpModel

	def __post_init__(self):
		if self.high_gp.dim != self.low_gp.dim + 1:
			raise DimensionMismatch(self.low_gp.dim + 1, self.high_gp.dim)

	@property
	def dim(self):
		return self.low_gp.dim

	@property
	def features(self):
		return self.low_gp.features

	def predict(self, Xq, n_samples=NARGP_SAMPLES, seed=0):
		return nargp_predict(self, Xq, n_samples, seed)


def nargp_fit(pair, seed=0, restarts=10, sqrt3_variant=False):
	log.info("Fitting NARGP: %d low / %d high points", len(pair.low), len(pair.high))
	low_gp = gp.fit(pair.low, seed, restarts, pair.features, sqrt3_variant)
	XH = pair.high.features(pair.features)
	mu_low = gp.predict(low_gp, XH, include_noise=False).mean
	high_gp = gp.fit_arrays(_augment(XH, mu_low), pair.high.targets(),
		pair.features + (LOW_FIDELITY_INPUT,), seed + 1, restarts, sqrt3_variant)
	return NargpModel(low_gp, high_gp)


def pool_moments(means, variances):
	"""
	Pools conditional Gaussian moments over the last axis by the law of
	total variance: mean of means, mean of variances + variance of means.
	"""
	means = np.asarray(means, dtype=float)
	variances = np.asarray(variances, dtype=float)
	mean = means.mean(axis=-1)
	var = variances.mean(axis=-1) + np.mean((means - mean[..., None]) ** 2, axis=-1)
	return mean, var


def nargp_predict(m, Xq, n_samples=NARGP_SAMPLES, seed=0):
	if n_samples < 2:
		raise PreconditionViolation('Bad sample count', 'NARGP prediction needs n_samples >= 2')
	Xq = np.asarray(Xq, dtype=float)
	if Xq.ndim == 1:
		Xq = Xq[None, :]
	if Xq.shape[1] != m.dim:
		raise DimensionMismatch(m.dim, Xq.shape[1])
	low = gp.predict(m.low_gp, Xq, include_noise=False)
	rng = numerics.make_rng(seed)
	draws = low.mean[:, None] + low.sd[:, None] * rng.standard_normal((len(Xq), n_samples))
	rows = _augment(np.repeat(Xq, n_samples, axis=0), draws.ravel())
	high = gp.predict(m.high_gp, rows)
	mean, var = pool_moments(high.mean.reshape(len(Xq), n_samples), high.variance.reshape(len(Xq), n_samples))
	return Prediction(mean, var, n_samples)


#------------------------ multi-fidelity generative ------------------------#
@dataclass
class MfGenerativeModel:
	low_proxy: gp.GpModel
	core: generative.GenerativeModel

	def __post_init__(self):
		if self.core.generator.n_inputs != self.low_proxy.dim + 1 + self.core.latent_dim:
			raise DimensionMismatch(self.low_proxy.dim + 1 + self.core.latent_dim, self.core.generator.n_inputs)

	@property
	def dim(self):
		return self.low_proxy.dim

	@property
	def features(self):
		return self.low_proxy.features

	def predict(self, Xq, n_samples=2000, seed=0):
		return mf_generative_predict(self, Xq, n_samples, seed)


def mf_generative_fit(pair, arch=generative.Architecture(), cfg=generative.TrainConfig(), restarts=10,
		sqrt3_variant=False, verbose=False):
	log.info("Fitting MF generative model: %d low / %d high points", len(pair.low), len(pair.high))
	proxy = gp.fit(pair.low, cfg.seed, restarts, pair.features, sqrt3_variant)
	XH = pair.high.features(pair.features)
	mu_low = gp.predict(proxy, XH, include_noise=False).mean
	core = generative.train_arrays(_augment(XH, mu_low), pair.high.targets(),
		pair.features + (LOW_FIDELITY_INPUT,), arch, cfg, verbose)
	return MfGenerativeModel(proxy, core)


def mf_generative_predict(m, Xq, n_samples=2000, seed=0):
	Xq = np.asarray(Xq, dtype=float)
	if Xq.ndim == 1:
		Xq = Xq[None, :]
	if Xq.shape[1] != m.dim:
		raise DimensionMismatch(m.dim, Xq.shape[1])
	mu_low = gp.predict(m.low_proxy, Xq, include_noise=False).mean
	return generative.predict_moments(m.core, _augment(Xq, mu_low), n_samples, seed)


#------------------------ experiments ------------------------#
@dataclass(frozen=True)
class ModelSettings:
	kind: str = 'gp'
	restarts: int = 10
	sqrt3_variant: bool = False
	arch: generative.Architecture = generative.Architecture()
	train: generative.TrainConfig = generative.TrainConfig()
	n_samples: int = 2000
	nargp_samples: int = NARGP_SAMPLES
	seed: int = 0
	verbose: bool = False


def fit_single(settings, train_set, features=FEATURES):
	if settings.kind == 'gp':
		return gp.fit(train_set, settings.seed, settings.restarts, features, settings.sqrt3_variant)
	if settings.kind == 'gen':
		return generative.train(train_set, settings.arch, settings.train, features, settings.verbose)
	raise PreconditionViolation('Unknown model kind', repr(settings.kind))


def predict_with(model, Xq, settings):
	"""Prediction for any model kind, with the sample counts of settings."""
	if isinstance(model, gp.GpModel):
		return gp.predict(model, Xq)
	if isinstance(model, generative.GenerativeModel):
		return generative.predict_moments(model, Xq, settings.n_samples, settings.seed)
	if isinstance(model, NargpModel):
		return nargp_predict(model, Xq, settings.nargp_samples, settings.seed)
	if isinstance(model, MfGenerativeModel):
		return mf_generative_predict(model, Xq, settings.n_samples, settings.seed)
	raise PreconditionViolation('Unknown model type', type(model).__name__)


def report_rows(label, n_added, reference, prediction):
	"""One report row per reference point: prediction, band and relative error."""
	rows = []
	for point, mean, sd in zip(reference, prediction.mean, prediction.sd):
		rows.append({
			'model': label,
			'n_added': n_added,
			'pressure_mpa': point.pressure,
			'temperature_k': point.temperature,
			'mean': float(mean),
			'sd': float(sd),
			'ref_value': point.density,
			'rel_error': abs(float(mean) - point.density) / point.density,
		})
	return rows


@dataclass
class FusionReport:
	rows: List[dict] = field(default_factory=list)
	summary: List[dict] = field(default_factory=list)
	failures: List[tuple] = field(default_factory=list)
	anchor_violations: List[tuple] = field(default_factory=list)


def fusion_experiment(base, nist_points, reference, settings, features=None):
	"""
	Trains settings.kind on fuse(base, nist_points) and scores the predictive
	mean against the reference curve. Returns (rows, model, features).
	"""
	fused = dataset.fuse(base, nist_points)
	features = tuple(features) if features else dataset.varying_features(fused)
	model = fit_single(settings, fused, features)
	prediction = predict_with(model, reference.features(features), settings)
	rows = report_rows(settings.kind, len(nist_points), reference, prediction)
	return rows, model, features


def fusion_study(base, nist_points, reference, settings, arms=(0, 1, 2, 3), threads=1):
	"""
	Runs one fusion arm per n_added in arms, arm k adding the first k NIST
	points. Failed arms are recorded and the remaining arms still run.
	"""
	report = FusionReport()
	features = dataset.varying_features(dataset.fuse(base, nist_points))

	def run_arm(n_added):
		if n_added < 0 or n_added > len(nist_points):
			raise PreconditionViolation('Fusion arm out of range',
				'n_added=%d but only %d NIST points' % (n_added, len(nist_points)))
		rows, model, _ = fusion_experiment(base, nist_points.subset(range(n_added)), reference, settings, features)
		return rows, model

	results = {}
	with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
		futures = {n: pool.submit(run_arm, n) for n in arms}
		for n, future in futures.items():
			try:
				results[n] = future.result()
			except PropsurroError as ex:
				log.error("Fusion arm n_added=%d failed: %s", n, ex)
				report.failures.append((n, str(ex)))

	for n in arms:
		if n not in results:
			continue
		rows, _ = results[n]
		report.rows.extend(rows)
		truth = np.array([r['ref_value'] for r in rows])
		pred = np.array([r['mean'] for r in rows])
		report.summary.append({'model': settings.kind, 'n_added': n, 'l2_mre': metrics.l2_mre(truth, pred)})

	# error at an added point must not grow relative to the no-fusion arm
	if 0 in results:
		_, baseline_model = results[0]
		for n in arms:
			if n == 0 or n not in results:
				continue
			extra = nist_points.subset(range(n))
			X = extra.features(features)
			before = predict_with(baseline_model, X, settings).mean
			after = predict_with(results[n][1], X, settings).mean
			for point, b, a in zip(extra, before, after):
				err_before, err_after = abs(b - point.density), abs(a - point.density)
				if err_after > err_before:
					log.warning("Fusion arm %d: error at T=%g grew from %.4g to %.4g",
						n, point.temperature, err_before, err_after)
					report.anchor_violations.append((n, err_before, err_after))
	return report


def mf_experiment(pair, reference, settings):
	"""
	NARGP and MF-generative arms on one fidelity pair, scored on the reference
	curve. Returns a FusionReport with n_added = |high|.
	"""
	report = FusionReport()
	query = reference.features(pair.features)
	arms = (
		('nargp', lambda: nargp_fit(pair, settings.seed, settings.restarts, settings.sqrt3_variant)),
		('mf_gen', lambda: mf_generative_fit(pair, settings.arch, settings.train, settings.restarts,
			settings.sqrt3_variant, settings.verbose)),
	)
	for label, fit_arm in arms:
		try:
			model = fit_arm()
			prediction = predict_with(model, query, settings)
		except PropsurroError as ex:
			log.error("Multi-fidelity arm %s failed: %s", label, ex)
			report.failures.append((label, str(ex)))
			continue
		rows = report_rows(label, len(pair.high), reference, prediction)
		report.rows.extend(rows)
		report.summary.append({'model': label, 'n_added': len(pair.high),
			'l2_mre': metrics.l2_mre(reference.targets(), prediction.mean)})
	return report
