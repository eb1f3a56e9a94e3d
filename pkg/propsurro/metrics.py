"""
Accuracy and uncertainty metrics, and the coefficient-of-variation map over
a pressure/temperature grid.

l2_mre is the mean of squared relative errors, (1/N) sum ((t - p) / t)^2.
Despite the "L2" name no square root is taken.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from dataset import FEATURES
from errors import (ConstantTruth, LengthMismatch, PreconditionViolation, PropsurroError,
	ZeroMean, ZeroTruthValue)

log = logging.getLogger(__name__)


def _pair(truth, pred, min_len):
	truth = np.asarray(truth, dtype=float).ravel()
	pred = np.asarray(pred, dtype=float).ravel()
	if len(truth) != len(pred) or len(truth) < min_len:
		raise LengthMismatch(len(truth), len(pred))
	return truth, pred


def l2_mre(truth, pred):
	truth, pred = _pair(truth, pred, 1)
	zeros = np.flatnonzero(truth == 0)
	if len(zeros):
		raise ZeroTruthValue(int(zeros[0]))
	return float(np.mean(((truth - pred) / truth) ** 2))


def r2_score(truth, pred):
	truth, pred = _pair(truth, pred, 2)
	total = np.sum((truth - truth.mean()) ** 2)
	if total == 0:
		raise ConstantTruth('Constant truth', 'R2 is undefined for constant targets')
	return float(1.0 - np.sum((truth - pred) ** 2) / total)


def coefficient_of_variation(pred):
	"""sd / mean of a Prediction; a float for single-point predictions."""
	mean = pred.mean
	if np.any(mean == 0):
		raise ZeroMean('Zero mean', 'coefficient of variation undefined at index %d' % int(np.flatnonzero(mean == 0)[0]))
	cv = pred.sd / mean
	return float(cv[0]) if len(cv) == 1 else cv


#------------------------ cv map ------------------------#
@dataclass(frozen=True)
class CvMapSpec:
	log10_pressure_range: Tuple[float, float] = (0.5, 2.5)
	n_pressures: int = 40
	temperature_range: Tuple[float, float] = (320.0, 900.0)
	temperature_step: float = 20.0
	carbon_count: int = 8

	def __post_init__(self):
		lo, hi = self.log10_pressure_range
		t_lo, t_hi = self.temperature_range
		if not hi > lo or not t_hi > t_lo or self.n_pressures < 2 or self.temperature_step <= 0:
			raise PreconditionViolation('Degenerate cv-map spec', repr(self))
		intervals = (t_hi - t_lo) / self.temperature_step
		if abs(intervals - round(intervals)) > 1e-9:
			raise PreconditionViolation('Bad cv-map step', 'step %g does not divide [%g, %g]' % (self.temperature_step, t_lo, t_hi))

	@property
	def pressures(self):
		return 10.0 ** np.linspace(self.log10_pressure_range[0], self.log10_pressure_range[1], self.n_pressures)

	@property
	def temperatures(self):
		t_lo, t_hi = self.temperature_range
		n = int(round((t_hi - t_lo) / self.temperature_step)) + 1
		return t_lo + self.temperature_step * np.arange(n)


@dataclass(frozen=True)
class CvMap:
	pressures: np.ndarray
	temperatures: np.ndarray
	cv: np.ndarray
	valid: np.ndarray

	@property
	def shape(self):
		return self.cv.shape

	def rows(self):
		"""(pressure, temperature, cv, valid) per cell, temperature-major."""
		out = []
		for i, T in enumerate(self.temperatures):
			for j, p in enumerate(self.pressures):
				out.append((float(p), float(T), float(self.cv[i, j]) if self.valid[i, j] else None, bool(self.valid[i, j])))
		return out


def _predictor(model):
	return model if callable(model) and not hasattr(model, 'predict') else model.predict


def _cell_cv(prediction):
	mean, sd = prediction.mean, prediction.sd
	ok = np.isfinite(mean) & np.isfinite(sd) & (mean != 0)
	cv = np.full(len(mean), np.nan)
	cv[ok] = sd[ok] / mean[ok]
	return cv, ok


def cv_map(model, spec=CvMapSpec(), features=None, threads=1):
	"""
	Coefficient of variation at every (temperature, pressure) node of spec.
	A cell whose prediction fails or is not finite is marked invalid and the
	sweep continues. model is a predictive model or a callable X -> Prediction.
	"""
	predict = _predictor(model)
	features = tuple(features or getattr(model, 'features', FEATURES))
	pressures, temperatures = spec.pressures, spec.temperatures

	def query(T, ps):
		full = {'pressure': ps, 'temperature': np.full(len(ps), T), 'carbon_count': np.full(len(ps), float(spec.carbon_count))}
		return np.column_stack([full[f] for f in features])

	def sweep_row(T):
		try:
			return _cell_cv(predict(query(T, pressures)))
		except PropsurroError as ex:
			log.debug("cv-map row T=%g failed as a batch (%s); retrying per cell", T, ex)
		cv = np.full(len(pressures), np.nan)
		ok = np.zeros(len(pressures), dtype=bool)
		for j, p in enumerate(pressures):
			try:
				c, good = _cell_cv(predict(query(T, np.array([p]))))
				cv[j], ok[j] = c[0], good[0]
			except PropsurroError as ex:
				log.warning("cv-map cell p=%g T=%g invalid: %s", p, T, ex)
		return cv, ok

	with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
		results = list(pool.map(sweep_row, temperatures))
	cv = np.vstack([r[0] for r in results])
	valid = np.vstack([r[1] for r in results])
	if not valid.all():
		log.warning("cv-map: %d of %d cells invalid", int((~valid).sum()), valid.size)
	return CvMap(pressures, temperatures, cv, valid)
