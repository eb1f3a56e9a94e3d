"""
Environment, logging and run configuration.

A run config is a JSON document. It is deep-merged over DEFAULT_CONFIG,
command-line overrides are applied, and the result is validated against
CONFIG_SCHEMA. Unknown keys at any level are rejected.
"""
import copy
import json
import logging
import os
from logging.handlers import RotatingFileHandler

import jsonschema

import generative
import metrics
import multifidelity
import synthdata
from errors import ConfigError, PropsurroError

LOG_FORMAT = '%(asctime)s|%(filename)s:%(lineno)d|%(levelname)-8s: %(message)s'
LOG_DATEFMT = '%m/%d/%Y %I:%M:%S %p'
LOG_FILE = 'propsurro.log'

logging_level = os.environ.get("PROPSURRO_LOGGING_LEVEL", "WARNING")
log_dir = os.environ.get("PROPSURRO_LOG_DIR", "logs")

log = logging.getLogger(__name__)


def setup_logging(level=None, directory=None):
	level = level or logging_level
	directory = directory or log_dir
	os.makedirs(directory, exist_ok=True)
	path = os.path.abspath(os.path.join(directory, LOG_FILE))
	root = logging.getLogger()
	root.setLevel(level)
	for h in root.handlers:
		if isinstance(h, RotatingFileHandler) and h.baseFilename == path:
			return root
	handler = RotatingFileHandler(path, maxBytes=10000000, backupCount=10)
	handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
	root.addHandler(handler)
	return root


def threads():
	raw = os.environ.get("PROPSURRO_THREADS", "1")
	try:
		n = int(raw)
	except ValueError:
		raise ConfigError('PROPSURRO_THREADS', 'not an integer: %r' % raw)
	if n < 1:
		raise ConfigError('PROPSURRO_THREADS', 'must be >= 1')
	return n


#------------------------ defaults ------------------------#
DEFAULT_CONFIG = {
	'seed': 0,
	'model': 'gp',
	'data': {
		'path': None,
		'high_path': None,
		'transcritical_path': None,
		'reference_path': None,
		'pressures': list(synthdata.GRID_PRESSURES),
		'temperatures': list(synthdata.GRID_TEMPERATURES),
		'carbons': list(synthdata.GRID_CARBONS),
		'noise_sd': 0.0,
		'high_shift_k': -5.0,
		'high_sharpen': 0.9,
	},
	'split': {
		'train_fraction': 0.8,
		'subset_fractions': [1.0],
	},
	'kernel': {
		'sqrt3_variant': False,
	},
	'gp': {
		'restarts': 10,
	},
	'generative': {
		'steps': 50000,
		'learning_rate': 1e-4,
		'batch_size': 128,
		'disc_per_gen': '2:1',
		'lam': 1.5,
		'beta': 0.5,
		'beta_role': 'encoder',
		'latent_dim': 1,
		'generator_hidden': [100, 100, 100, 100],
		'encoder_hidden': [100, 100, 100, 100],
		'discriminator_hidden': [100, 100],
		'n_samples': 2000,
		'verbose': False,
	},
	'sweep': {
		'pressures': [3.0, 10.0, 100.0],
		'carbon_count': synthdata.DODECANE,
		'temperature_range': [320.0, 900.0],
		'temperature_step': 10.0,
		'extrapolate': False,
	},
	'multifidelity': {
		'pressure': synthdata.FUSION_PRESSURE,
		'carbon_count': synthdata.DODECANE,
		'temperatures': list(synthdata.MF_TEMPERATURES),
		'holdout_temperatures': [float(t) for t in range(320, 701, 10) if t not in synthdata.MF_TEMPERATURES],
		'nargp_samples': multifidelity.NARGP_SAMPLES,
	},
	'cvmap': {
		'log10_pressure_range': [0.5, 2.5],
		'n_pressures': 40,
		'temperature_range': [320.0, 900.0],
		'temperature_step': 20.0,
		'carbon_count': 8,
	},
	'fusion': {
		'carbon_count': synthdata.DODECANE,
		'pressure': synthdata.FUSION_PRESSURE,
		'temperatures': list(synthdata.FUSION_TEMPERATURES),
		'reference_temperatures': [float(t) for t in range(600, 761, 10)],
		'arms': [0, 1, 2, 3],
	},
	'output': {
		'dir': 'out',
		'plots': True,
	},
}

_NUMBER = {'type': 'number'}
_POSITIVE = {'type': 'number', 'exclusiveMinimum': 0}
_FRACTION = {'type': 'number', 'exclusiveMinimum': 0, 'maximum': 1}
_COUNT = {'type': 'integer', 'minimum': 1}
_BOOL = {'type': 'boolean'}
_RANGE = {'type': 'array', 'items': _NUMBER, 'minItems': 2, 'maxItems': 2}
_CARBON = {'type': 'integer', 'minimum': 1}


def _section(**properties):
	return {'type': 'object', 'additionalProperties': False, 'properties': properties}


def _list(items, min_items=0):
	return {'type': 'array', 'items': items, 'minItems': min_items}


CONFIG_SCHEMA = _section(
	seed={'type': 'integer', 'minimum': 0},
	model={'enum': ['gp', 'gen']},
	data=_section(
		path={'type': ['string', 'null']},
		high_path={'type': ['string', 'null']},
		transcritical_path={'type': ['string', 'null']},
		reference_path={'type': ['string', 'null']},
		pressures=_list(_POSITIVE),
		temperatures=_list(_POSITIVE),
		carbons=_list(_CARBON),
		noise_sd={'type': 'number', 'minimum': 0},
		high_shift_k=_NUMBER,
		high_sharpen=_POSITIVE,
	),
	split=_section(
		train_fraction=_FRACTION,
		subset_fractions=_list(_FRACTION, 1),
	),
	kernel=_section(sqrt3_variant=_BOOL),
	gp=_section(restarts=_COUNT),
	generative=_section(
		steps={'type': 'integer', 'minimum': 0},
		learning_rate=_POSITIVE,
		batch_size=_COUNT,
		disc_per_gen={'type': 'string', 'pattern': r'^\s*[0-9]+\s*:\s*[0-9]+\s*$'},
		lam={'type': 'number', 'minimum': 0},
		beta={'type': 'number', 'minimum': 0},
		beta_role={'enum': list(generative.BETA_ROLES)},
		latent_dim=_COUNT,
		generator_hidden=_list(_COUNT),
		encoder_hidden=_list(_COUNT),
		discriminator_hidden=_list(_COUNT),
		n_samples={'type': 'integer', 'minimum': 2},
		verbose=_BOOL,
	),
	sweep=_section(
		pressures=_list(_POSITIVE),
		carbon_count=_CARBON,
		temperature_range=_RANGE,
		temperature_step=_POSITIVE,
		extrapolate=_BOOL,
	),
	multifidelity=_section(
		pressure=_POSITIVE,
		carbon_count=_CARBON,
		temperatures=_list(_POSITIVE, 1),
		holdout_temperatures=_list(_POSITIVE, 1),
		nargp_samples={'type': 'integer', 'minimum': 2},
	),
	cvmap=_section(
		log10_pressure_range=_RANGE,
		n_pressures={'type': 'integer', 'minimum': 2},
		temperature_range=_RANGE,
		temperature_step=_POSITIVE,
		carbon_count=_CARBON,
	),
	fusion=_section(
		carbon_count=_CARBON,
		pressure=_POSITIVE,
		temperatures=_list(_POSITIVE, 1),
		reference_temperatures=_list(_POSITIVE, 1),
		arms=_list({'type': 'integer', 'minimum': 0}, 1),
	),
	output=_section(
		dir={'type': 'string'},
		plots=_BOOL,
	),
)


#------------------------ loading ------------------------#
def deep_merge(base, update):
	"""New dict with update merged into base; nested dicts merge key by key."""
	merged = copy.deepcopy(base)
	for key, value in update.items():
		if isinstance(value, dict) and isinstance(merged.get(key), dict):
			merged[key] = deep_merge(merged[key], value)
		else:
			merged[key] = copy.deepcopy(value)
	return merged


def _error_key(error):
	path = [str(p) for p in error.absolute_path]
	if error.validator == 'additionalProperties':
		extra = sorted(set(error.instance) - set(error.schema.get('properties', {})))
		path.append(extra[0] if extra else '?')
	return '.'.join(path) or '<root>'


def validate(doc):
	validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
	errors = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
	if errors:
		raise ConfigError(_error_key(errors[0]), errors[0].message)
	return doc


def apply_overrides(doc, overrides):
	"""Sets dotted keys ('split.train_fraction') on doc; None values are skipped."""
	for dotted, value in (overrides or {}).items():
		if value is None:
			continue
		node = doc
		*parents, leaf = dotted.split('.')
		for key in parents:
			node = node.setdefault(key, {})
		node[leaf] = value
	return doc


def load_config(path=None, overrides=None):
	doc = {}
	if path:
		try:
			with open(path, encoding='utf-8') as f:
				doc = json.load(f)
		except OSError as ex:
			raise ConfigError(path, 'cannot read config: %s' % ex)
		except ValueError as ex:
			raise ConfigError(path, 'not a JSON document: %s' % ex)
		if not isinstance(doc, dict):
			raise ConfigError(path, 'top level must be an object')
	config = apply_overrides(deep_merge(DEFAULT_CONFIG, doc), overrides)
	validate(config)
	log.info("Loaded config from %s", path or 'defaults')
	return config


#------------------------ domain objects ------------------------#
def architecture(config):
	g = config['generative']
	return generative.Architecture(tuple(g['generator_hidden']), tuple(g['encoder_hidden']),
		tuple(g['discriminator_hidden']))


def train_config(config):
	g = config['generative']
	try:
		return generative.TrainConfig(g['steps'], g['learning_rate'], g['batch_size'], g['disc_per_gen'],
			g['lam'], g['beta'], g['beta_role'], g['latent_dim'], config['seed'])
	except PropsurroError as ex:
		raise ConfigError('generative', str(ex))


def model_settings(config, kind=None):
	return multifidelity.ModelSettings(
		kind=kind or config['model'],
		restarts=config['gp']['restarts'],
		sqrt3_variant=config['kernel']['sqrt3_variant'],
		arch=architecture(config),
		train=train_config(config),
		n_samples=config['generative']['n_samples'],
		nargp_samples=config['multifidelity']['nargp_samples'],
		seed=config['seed'],
		verbose=config['generative']['verbose'],
	)


def cvmap_spec(config):
	c = config['cvmap']
	try:
		return metrics.CvMapSpec(tuple(c['log10_pressure_range']), c['n_pressures'],
			tuple(c['temperature_range']), c['temperature_step'], c['carbon_count'])
	except PropsurroError as ex:
		raise ConfigError('cvmap', str(ex))


def oracle_params(config, seed_offset=0):
	return synthdata.OracleParams(noise_sd=config['data']['noise_sd'], seed=config['seed'] + seed_offset)


def high_oracle_params(config):
	d = config['data']
	return synthdata.high_fidelity(oracle_params(config, 1), d['high_shift_k'], d['high_sharpen'])
