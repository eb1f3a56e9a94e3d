"""
Tabular data model for density observations: CSV ingestion, splitting,
standardization and fusion of high-fidelity points into a training set.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import (DataError, EmptyDataset, KeyCollision, MissingColumn,
	NonNumericCell, NonPositiveValue, PreconditionViolation, ZeroVariance)

log = logging.getLogger(__name__)

FEATURES = ('pressure', 'temperature', 'carbon_count')
TARGET = 'density'

# csv header name for every DataPoint field
COLUMNS = {
	'pressure': 'pressure_mpa',
	'temperature': 'temperature_k',
	'carbon_count': 'carbon_count',
	'density': 'density_kgm3',
}
FIDELITY_COLUMN = 'fidelity'


class Fidelity(enum.Enum):
	LOW = 'low'
	HIGH = 'high'

	@classmethod
	def parse(cls, value):
		if isinstance(value, cls):
			return value
		try:
			return cls(str(value).strip().lower())
		except ValueError:
			raise DataError('Bad fidelity', 'expected low/high, got %r' % value)


@dataclass(frozen=True)
class DataPoint:
	pressure: float
	temperature: float
	carbon_count: int
	density: float
	fidelity: Fidelity = Fidelity.LOW

	def __post_init__(self):
		for name in ('pressure', 'temperature', 'density'):
			if not getattr(self, name) > 0:
				raise NonPositiveValue(None, name, getattr(self, name))
		if self.carbon_count < 1:
			raise NonPositiveValue(None, 'carbon_count', self.carbon_count)

	@property
	def key(self):
		return (self.pressure, self.temperature, self.carbon_count, self.fidelity)

	@property
	def site(self):
		return (self.pressure, self.temperature, self.carbon_count)

	def value(self, name):
		return float(getattr(self, name))


@dataclass(frozen=True)
class Dataset:
	points: Tuple[DataPoint, ...] = ()
	name: str = ''

	def __post_init__(self):
		points = tuple(self.points)
		object.__setattr__(self, 'points', points)
		seen = set()
		for p in points:
			if p.key in seen:
				raise KeyCollision(p.key)
			seen.add(p.key)

	def __len__(self):
		return len(self.points)

	def __iter__(self):
		return iter(self.points)

	def __getitem__(self, i):
		return self.points[i]

	def features(self, names=FEATURES):
		"""Returns an (n x len(names)) float matrix of the named fields."""
		return np.array([[p.value(n) for n in names] for p in self.points], dtype=float).reshape(len(self), len(names))

	def targets(self):
		return np.array([p.density for p in self.points], dtype=float)

	def subset(self, indices, name=None):
		return Dataset(tuple(self.points[i] for i in indices), self.name if name is None else name)


@dataclass(frozen=True)
class Prediction:
	mean: np.ndarray
	variance: np.ndarray
	n_samples: Optional[int] = None

	def __post_init__(self):
		object.__setattr__(self, 'mean', np.atleast_1d(np.asarray(self.mean, dtype=float)))
		object.__setattr__(self, 'variance', np.atleast_1d(np.asarray(self.variance, dtype=float)))

	def __len__(self):
		return len(self.mean)

	@property
	def sd(self):
		return np.sqrt(np.maximum(self.variance, 0.0))

	def band(self, k=2.0):
		return self.mean - k * self.sd, self.mean + k * self.sd


@dataclass(frozen=True)
class Standardizer:
	mean: np.ndarray
	sd: np.ndarray
	names: Tuple[str, ...] = field(default=())

	def transform(self, X):
		return (np.asarray(X, dtype=float) - self.mean) / self.sd

	def inverse_transform(self, Z):
		return np.asarray(Z, dtype=float) * self.sd + self.mean

	def inverse_variance(self, V):
		return np.asarray(V, dtype=float) * self.sd ** 2

	def to_dict(self):
		return {'names': list(self.names), 'mean': self.mean.tolist(), 'sd': self.sd.tolist()}

	@classmethod
	def from_dict(cls, doc):
		return cls(np.array(doc['mean'], dtype=float), np.array(doc['sd'], dtype=float), tuple(doc['names']))


@dataclass(frozen=True)
class SplitSpec:
	train_fraction: float = 0.8
	subset_fraction: float = 1.0
	seed: int = 0

	def __post_init__(self):
		for name in ('train_fraction', 'subset_fraction'):
			v = getattr(self, name)
			if not 0.0 < v <= 1.0:
				raise PreconditionViolation('Bad split fraction', '%s=%r not in (0, 1]' % (name, v))
		if self.seed < 0:
			raise PreconditionViolation('Bad split seed', 'seed must be unsigned')


def _round_half_up(x):
	return int(np.floor(x + 0.5))


#------------------------ csv ------------------------#
def load_csv(path, fidelity_default=Fidelity.LOW, name=None):
	fidelity_default = Fidelity.parse(fidelity_default)
	frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding='utf-8')
	frame.columns = [c.strip() for c in frame.columns]
	for column in COLUMNS.values():
		if column not in frame.columns:
			raise MissingColumn(column)

	values = {}
	for field_name, column in COLUMNS.items():
		raw = frame[column].str.strip()
		numeric = pd.to_numeric(raw, errors='coerce')
		# nan and inf both parse, neither is a usable number
		bad = np.flatnonzero(~np.isfinite(numeric.to_numpy(dtype=float, na_value=np.nan)))
		if len(bad):
			row = int(bad[0])
			raise NonNumericCell(row, column, raw.iloc[row])
		if field_name == 'carbon_count':
			fractional = np.flatnonzero(numeric.to_numpy() != np.round(numeric.to_numpy()))
			if len(fractional):
				row = int(fractional[0])
				raise NonNumericCell(row, column, raw.iloc[row])
		non_positive = np.flatnonzero(numeric.to_numpy() <= 0)
		if len(non_positive):
			row = int(non_positive[0])
			raise NonPositiveValue(row, column, raw.iloc[row])
		values[field_name] = numeric.to_numpy()

	if FIDELITY_COLUMN in frame.columns:
		fidelities = [Fidelity.parse(v) if v.strip() else fidelity_default for v in frame[FIDELITY_COLUMN]]
	else:
		fidelities = [fidelity_default] * len(frame)

	points = [DataPoint(float(values['pressure'][i]), float(values['temperature'][i]),
		int(values['carbon_count'][i]), float(values['density'][i]), fidelities[i])
		for i in range(len(frame))]
	log.info("Loaded %d points from %s", len(points), path)
	return Dataset(tuple(points), str(path) if name is None else name)


def to_frame(d):
	return pd.DataFrame({
		COLUMNS['pressure']: [p.pressure for p in d],
		COLUMNS['temperature']: [p.temperature for p in d],
		COLUMNS['carbon_count']: [int(p.carbon_count) for p in d],
		COLUMNS['density']: [p.density for p in d],
		FIDELITY_COLUMN: [p.fidelity.value for p in d],
	}, columns=list(COLUMNS.values()) + [FIDELITY_COLUMN])


def write_csv(d, path):
	to_frame(d).to_csv(path, index=False, float_format='%.10g', encoding='utf-8')
	log.info("Wrote %d points to %s", len(d), path)


#------------------------ selection and splitting ------------------------#
def select(d, pressure=None, carbon_count=None, fidelity=None, name=None):
	keep = []
	for p in d:
		if pressure is not None and not np.isclose(p.pressure, pressure):
			continue
		if carbon_count is not None and p.carbon_count != carbon_count:
			continue
		if fidelity is not None and p.fidelity != Fidelity.parse(fidelity):
			continue
		keep.append(p)
	return Dataset(tuple(keep), d.name if name is None else name)


def varying_features(d, names=FEATURES):
	"""Names of the features that are not constant over d."""
	X = d.features(names)
	return tuple(n for j, n in enumerate(names) if len(X) and np.ptp(X[:, j]) > 0)


def split(d, s):
	"""
	Partitions d into a training subset and a test set.

	The test set is the fixed complement of the train_fraction pool; the
	subset fraction only shrinks the training side, drawn independently of
	other subset fractions with the same seed.
	"""
	if len(d) == 0:
		raise EmptyDataset(d.name)
	n = len(d)
	rng = np.random.default_rng(s.seed)
	order = rng.permutation(n)
	n_pool = _round_half_up(s.train_fraction * n)
	pool, test = order[:n_pool], order[n_pool:]
	n_train = _round_half_up(s.subset_fraction * s.train_fraction * n)
	if n_train < len(pool):
		sub_rng = np.random.default_rng([s.seed, _round_half_up(s.subset_fraction * 1e6)])
		pool = sub_rng.permutation(pool)[:n_train]
	train_idx = np.sort(pool)
	test_idx = np.sort(test)
	log.debug("Split %d points into %d train / %d test (seed %d)", n, len(train_idx), len(test_idx), s.seed)
	return d.subset(train_idx, d.name + ':train'), d.subset(test_idx, d.name + ':test')


#------------------------ standardization ------------------------#
def standardizer_from_array(X, names):
	X = np.asarray(X, dtype=float)
	if X.ndim == 1:
		X = X[:, None]
	if X.shape[0] < 2:
		raise PreconditionViolation('Too few points', 'standardizer needs at least 2 points, got %d' % X.shape[0])
	mean = X.mean(axis=0)
	sd = X.std(axis=0)
	for j, name in enumerate(names):
		if sd[j] <= 1e-12 * max(abs(mean[j]), 1.0):
			raise ZeroVariance(name)
	return Standardizer(mean, sd, tuple(names))


def fit_standardizer(d, features=FEATURES):
	"""Population mean/sd per selected feature (TARGET selects the density column)."""
	features = tuple(features)
	cols = []
	for name in features:
		if name == TARGET:
			cols.append(d.targets())
		else:
			cols.append(d.features((name,))[:, 0])
	X = np.column_stack(cols) if cols else np.zeros((len(d), 0))
	return standardizer_from_array(X, features)


#------------------------ fusion ------------------------#
def fuse(base, extra):
	"""Concatenates extra (re-tagged High fidelity) onto base; base is never mutated."""
	sites = {p.site: p.density for p in base}
	fused = list(base.points)
	for p in extra:
		if p.site in sites and sites[p.site] != p.density:
			raise KeyCollision(p.site)
		fused.append(DataPoint(p.pressure, p.temperature, p.carbon_count, p.density, Fidelity.HIGH))
	log.info("Fused %d extra points into %s", len(extra), base.name)
	return Dataset(tuple(fused), base.name)
