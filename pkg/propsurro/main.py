##### Pylint Configurations #################
# For the complete list of pylint error messages, http://pylint-messages.wikidot.com/all-codes
# To disable pylint "Line too long (%s/%s)" error message.
# pylint: disable=C0301
# To disable missing module docstring error message.
# pylint: disable=C0111
# To disable too many arguments / locals on the command functions.
# pylint: disable=R0913,R0914
# ##### Pylint Configurations ends here########

import os
import json
import time
import logging
from functools import wraps

import click
import numpy as np
import pandas as pd

import dataset
import generative
import gp
import metrics
import multifidelity
import settings
import svgplot
import synthdata
from dataset import FEATURES, Fidelity, Prediction
from errors import ConfigError, DataError, ExperimentFailed, ModelFileError, OutOfDomain, PropsurroError

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_FAILURE = 3
EXIT_MODEL_FILE = 4

LOW_FILE = 'low_fidelity.csv'
HIGH_FILE = 'high_fidelity.csv'
TRANSCRITICAL_FILE = 'low_transcritical.csv'
# temperature grid of the fixed-pressure reference exports
REFERENCE_TEMPERATURES = tuple(float(t) for t in range(320, 901, 10))
FLOAT_FORMAT = '%.10g'


def exit_code(ex):
	if isinstance(ex, ConfigError):
		return EXIT_CONFIG
	if isinstance(ex, ModelFileError):
		return EXIT_MODEL_FILE
	return EXIT_FAILURE


def exit_on_error(f):                                                   #--------------Maps errors onto exit codes-------------------#
	@wraps(f)
	def wrapper(*args, **kwargs):
		try:
			return f(*args, **kwargs)
		except PropsurroError as ex:
			code = exit_code(ex)
			log.error("%s failed (exit %d): %s", f.__name__, code, ex)
			click.echo('Error: %s' % ex, err=True)
			click.get_current_context().exit(code)
	return wrapper


def _float_list(ctx, param, value):
	if value is None:
		return None
	try:
		values = [float(v) for v in value.split(',') if v.strip()]
	except ValueError:
		raise click.BadParameter('expected comma-separated numbers, got %r' % value)
	return values


def _int_list(ctx, param, value):
	if value is None:
		return None
	try:
		return [int(v) for v in value.split(',') if v.strip()]
	except ValueError:
		raise click.BadParameter('expected comma-separated integers, got %r' % value)


#------------------------ helpers ------------------------#
def _config(ctx, overrides=None):
	merged = dict(ctx.obj['overrides'])
	merged.update(overrides or {})
	config = settings.load_config(ctx.obj['config_path'], merged)
	os.makedirs(config['output']['dir'], exist_ok=True)
	return config


def _out(config, name):
	return os.path.join(config['output']['dir'], name)


def _data_path(config, key, default_name):
	return config['data'][key] or _out(config, default_name)


def _load_dataset(path, fidelity=Fidelity.LOW):
	try:
		return dataset.load_csv(path, fidelity)
	except (OSError, ValueError) as ex:
		raise DataError('Cannot read dataset', '%s: %s' % (path, ex))


def _write_frame(frame, path):
	frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='', encoding='utf-8')
	log.info("Wrote %s (%d rows)", path, len(frame))
	return path


def _write_json(doc, path):
	with open(path, 'w', encoding='utf-8') as f:
		json.dump(doc, f, indent=2, sort_keys=True)
	log.info("Wrote %s", path)
	return path


def _domain(d):
	X = d.features(FEATURES)
	return {name: [float(X[:, j].min()), float(X[:, j].max())] for j, name in enumerate(FEATURES)}


def save_model(model, path, training_set):
	"""Model document of gp/generative with the training domain attached."""
	module = gp if isinstance(model, gp.GpModel) else generative
	doc = module.to_dict(model)
	doc['domain'] = _domain(training_set)
	_write_json(doc, path)
	return path


def load_model(path):
	"""Returns (model, domain or None), dispatching on the document kind."""
	try:
		with open(path, encoding='utf-8') as f:
			doc = json.load(f)
	except (OSError, ValueError) as ex:
		raise ModelFileError('Unreadable model file', '%s: %s' % (path, ex))
	if not isinstance(doc, dict):
		raise ModelFileError('Malformed model file', path)
	loaders = {'gp': gp.from_dict, 'generative': generative.from_dict}
	if doc.get('kind') not in loaders:
		raise ModelFileError('Unknown model kind', repr(doc.get('kind')))
	return loaders[doc['kind']](doc), doc.get('domain')


def _query(features, pressure, temperatures, carbon_count):
	full = {
		'pressure': np.full(len(temperatures), float(pressure)),
		'temperature': np.asarray(temperatures, dtype=float),
		'carbon_count': np.full(len(temperatures), float(carbon_count)),
	}
	return np.column_stack([full[f] for f in features])


def _check_domain(domain, pressures, temperatures, carbon_count):
	if not domain:
		log.warning("Model file carries no training domain; sweep not checked")
		return
	requested = {'pressure': pressures, 'temperature': temperatures, 'carbon_count': [carbon_count]}
	for name, values in requested.items():
		lo, hi = domain[name]
		outside = [v for v in values if not lo - 1e-9 <= v <= hi + 1e-9]
		if outside:
			raise ConfigError('sweep', '%s %s outside training domain [%g, %g]; pass --extrapolate to allow'
				% (name, outside, lo, hi))


def _rows_prediction(rows):
	return Prediction(np.array([r['mean'] for r in rows]), np.array([r['sd'] for r in rows]) ** 2)


def _plot_rows(config, rows, name, title):
	if not config['output']['plots'] or not rows:
		return
	svg = svgplot.series_svg([r['temperature_k'] for r in rows], _rows_prediction(rows), title,
		[(r['temperature_k'], r['ref_value']) for r in rows])
	svgplot.write(_out(config, name), svg)


def _report_frames(report):
	rows = pd.DataFrame(report.rows, columns=list(multifidelity.REPORT_COLUMNS))
	summary = pd.DataFrame(report.summary, columns=['model', 'n_added', 'l2_mre'])
	return rows, summary


#------------------------ commands ------------------------#
@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None, help='JSON run config.')
@click.option('--seed', type=click.IntRange(min=0), default=None, help='Overrides the config seed.')
@click.option('--out', 'out_dir', default=None, help='Output directory.')
@click.pass_context
def cli(ctx, config_path, seed, out_dir):
	"""Surrogate models for fuel density rho(p, T, C)."""
	settings.setup_logging()
	ctx.obj = {'config_path': config_path, 'overrides': {'seed': seed, 'output.dir': out_dir}}


@cli.command()
@click.option('--carbons', callback=_int_list, default=None, help='Comma-separated carbon counts, e.g. 12 or 8,12.')
@click.pass_context
@exit_on_error
def generate(ctx, carbons):
	"""Writes low- and high-fidelity oracle tables."""
	config = _config(ctx, {'data.carbons': carbons})
	data = config['data']
	low_params, high_params = settings.oracle_params(config), settings.high_oracle_params(config)
	reference_carbon = config['fusion']['carbon_count']
	reference_pressure = config['fusion']['pressure']
	try:
		low = synthdata.generate_table(data['pressures'], data['temperatures'], data['carbons'], low_params,
			Fidelity.LOW, 'low_fidelity')
		high = synthdata.generate_table([reference_pressure], REFERENCE_TEMPERATURES, [reference_carbon], high_params,
			Fidelity.HIGH, 'high_fidelity')
		transcritical = synthdata.generate_table([reference_pressure], REFERENCE_TEMPERATURES, [reference_carbon],
			low_params, Fidelity.LOW, 'low_transcritical')
	except OutOfDomain as ex:
		raise ConfigError('data', str(ex))
	for d, name in ((low, LOW_FILE), (high, HIGH_FILE), (transcritical, TRANSCRITICAL_FILE)):
		dataset.write_csv(d, _out(config, name))
	click.echo('wrote %d low-fidelity and %d high-fidelity rows to %s' % (len(low), len(high), config['output']['dir']))


@cli.command()
@click.option('--data', 'data_path', default=None, help='Training CSV (default <out>/low_fidelity.csv).')
@click.option('--model', 'kind', type=click.Choice(['gp', 'gen']), default=None)
@click.option('--train-frac', type=float, default=None)
@click.option('--subset-frac', callback=_float_list, default=None, help='Comma-separated subset fractions, e.g. 0.1,0.5,1.0.')
@click.option('--steps', type=click.IntRange(min=0), default=None, help='Generative optimizer updates.')
@click.pass_context
@exit_on_error
def train(ctx, data_path, kind, train_frac, subset_frac, steps):
	"""Fits a model on a random split and scores the held-out points."""
	config = _config(ctx, {'data.path': data_path, 'model': kind, 'split.train_fraction': train_frac,
		'split.subset_fractions': subset_frac, 'generative.steps': steps})
	model_settings = settings.model_settings(config)
	data = _load_dataset(_data_path(config, 'path', LOW_FILE))
	features = dataset.varying_features(data)
	fractions = config['split']['subset_fractions']
	runs = []
	for fraction in fractions:
		spec = dataset.SplitSpec(config['split']['train_fraction'], fraction, config['seed'])
		train_set, test_set = dataset.split(data, spec)
		started = time.perf_counter()
		model = multifidelity.fit_single(model_settings, train_set, features)
		wall_time = time.perf_counter() - started
		run = {'model': model_settings.kind, 'subset_fraction': fraction, 'train_fraction': spec.train_fraction,
			'n_train': len(train_set), 'n_test': len(test_set), 'wall_time': wall_time, 'l2_mre': None, 'r2': None}
		if len(test_set) >= 2:
			pred = multifidelity.predict_with(model, test_set.features(features), model_settings)
			run['l2_mre'] = metrics.l2_mre(test_set.targets(), pred.mean)
			run['r2'] = metrics.r2_score(test_set.targets(), pred.mean)
		else:
			log.warning("Held-out set has %d points; metrics skipped", len(test_set))
		name = 'model_%s.json' % model_settings.kind if len(fractions) == 1 else \
			'model_%s_%03d.json' % (model_settings.kind, round(fraction * 100))
		run['model_file'] = save_model(model, _out(config, name), data)
		log.info("Trained %s on %d points in %.2fs: l2_mre=%s r2=%s", model_settings.kind, len(train_set),
			wall_time, run['l2_mre'], run['r2'])
		runs.append(run)
		click.echo('%s subset=%g l2_mre=%s r2=%s' % (model_settings.kind, fraction, run['l2_mre'], run['r2']))
	_write_json({'features': list(features), 'runs': runs}, _out(config, 'train_report.json'))


@cli.command()
@click.argument('model_file', type=click.Path(dir_okay=False))
@click.option('--pressures', callback=_float_list, default=None, help='Comma-separated sweep pressures in MPa.')
@click.option('--carbon', type=int, default=None, help='Carbon count of the sweep.')
@click.option('--reference', 'reference_path', default=None, help='Reference CSV to compare against.')
@click.option('--extrapolate', is_flag=True, help='Allow sweeps outside the training domain.')
@click.pass_context
@exit_on_error
def predict(ctx, model_file, pressures, carbon, reference_path, extrapolate):
	"""Density series rho(T) with a 2 sd band at fixed pressures."""
	config = _config(ctx, {'sweep.pressures': pressures, 'sweep.carbon_count': carbon,
		'sweep.extrapolate': True if extrapolate else None, 'data.reference_path': reference_path})
	sweep = config['sweep']
	if not sweep['pressures']:
		raise ConfigError('sweep.pressures', 'empty sweep')
	model, domain = load_model(model_file)
	model_settings = settings.model_settings(config)
	reference = None
	carbon_count = sweep['carbon_count']
	if config['data']['reference_path']:
		reference = _load_dataset(config['data']['reference_path'], Fidelity.HIGH)
		carbons = sorted({p.carbon_count for p in reference})
		if carbon is None and len(carbons) == 1:
			carbon_count = carbons[0]
	t_lo, t_hi = sweep['temperature_range']
	n_t = int(round((t_hi - t_lo) / sweep['temperature_step'])) + 1
	if t_hi <= t_lo or n_t < 2:
		raise ConfigError('sweep.temperature_range', 'empty sweep')
	temperatures = np.linspace(t_lo, t_hi, n_t)
	if not sweep['extrapolate']:
		_check_domain(domain, sweep['pressures'], temperatures, carbon_count)

	extrapolation = []
	for pressure in sweep['pressures']:
		pred = multifidelity.predict_with(model, _query(model.features, pressure, temperatures, carbon_count), model_settings)
		lower, upper = pred.band(2.0)
		frame = pd.DataFrame({'pressure_mpa': pressure, 'temperature_k': temperatures, 'carbon_count': carbon_count,
			'mean': pred.mean, 'sd': pred.sd, 'lower': lower, 'upper': upper, 'ref_value': np.nan, 'rel_error': np.nan})
		markers = []
		if reference is not None:
			ref = dataset.select(reference, pressure=pressure, carbon_count=carbon_count)
			if len(ref):
				ref_pred = multifidelity.predict_with(model, ref.features(model.features), model_settings)
				markers = [(p.temperature, p.density) for p in ref]
				for p, mean in zip(ref, ref_pred.mean):
					hit = np.isclose(frame['temperature_k'], p.temperature)
					frame.loc[hit, 'ref_value'] = p.density
					frame.loc[hit, 'rel_error'] = abs(mean - p.density) / p.density
				extrapolation.append({'pressure_mpa': pressure, 'carbon_count': carbon_count, 'n_points': len(ref),
					'l2_mre': metrics.l2_mre(ref.targets(), ref_pred.mean)})
		stem = 'series_p%g' % pressure
		_write_frame(frame, _out(config, stem + '.csv'))
		if config['output']['plots']:
			svgplot.write(_out(config, stem + '.svg'), svgplot.series_svg(temperatures, pred,
				'%g MPa, C%d' % (pressure, carbon_count), markers))
	if reference is not None:
		_write_frame(pd.DataFrame(extrapolation, columns=['pressure_mpa', 'carbon_count', 'n_points', 'l2_mre']),
			_out(config, 'reference_report.csv'))
		for row in extrapolation:
			click.echo('p=%g MPa l2_mre=%.6g' % (row['pressure_mpa'], row['l2_mre']))
	click.echo('wrote %d series to %s' % (len(sweep['pressures']), config['output']['dir']))


@cli.command()
@click.argument('model_file', type=click.Path(dir_okay=False))
@click.option('--data', 'data_path', default=None, help='CSV to score against (default <out>/low_fidelity.csv).')
@click.pass_context
@exit_on_error
def evaluate(ctx, model_file, data_path):
	"""Scores a saved model against a dataset."""
	config = _config(ctx, {'data.path': data_path})
	model, _ = load_model(model_file)
	data = _load_dataset(_data_path(config, 'path', LOW_FILE))
	pred = multifidelity.predict_with(model, data.features(model.features), settings.model_settings(config))
	report = {
		'n': len(data),
		'l2_mre': metrics.l2_mre(data.targets(), pred.mean),
		'r2': metrics.r2_score(data.targets(), pred.mean) if len(data) >= 2 else None,
		'mean_cv': float(np.mean(pred.sd / pred.mean)),
	}
	_write_json(report, _out(config, 'evaluate_report.json'))
	click.echo('l2_mre=%.6g r2=%s mean_cv=%.6g' % (report['l2_mre'], report['r2'], report['mean_cv']))


@cli.command()
@click.argument('model_file', type=click.Path(dir_okay=False))
@click.pass_context
@exit_on_error
def cvmap(ctx, model_file):
	"""Coefficient-of-variation map over pressure and temperature."""
	config = _config(ctx)
	model, _ = load_model(model_file)
	model_settings = settings.model_settings(config)
	result = metrics.cv_map(lambda X: multifidelity.predict_with(model, X, model_settings), settings.cvmap_spec(config),
		model.features, settings.threads())
	frame = pd.DataFrame(result.rows(), columns=['pressure_mpa', 'temperature_k', 'cv', 'valid'])
	frame['valid'] = frame['valid'].astype(int)
	_write_frame(frame, _out(config, 'cvmap.csv'))
	if config['output']['plots']:
		svgplot.write(_out(config, 'cvmap.svg'), svgplot.cvmap_svg(result, 'cv, C%d' % config['cvmap']['carbon_count']))
	click.echo('cv map %dx%d, %d invalid cells' % (result.shape[0], result.shape[1], int((~result.valid).sum())))


def _fixed_curve(d, pressure, carbon_count, temperatures, what):
	chosen = dataset.select(d, pressure=pressure, carbon_count=carbon_count)
	keep = [i for i, p in enumerate(chosen) if np.any(np.isclose(p.temperature, temperatures))]
	if not keep:
		raise DataError('Empty %s' % what, 'no points at p=%g MPa, C%d for %s' % (pressure, carbon_count, temperatures))
	return chosen.subset(keep, what)


@cli.command()
@click.option('--model', 'kind', type=click.Choice(['gp', 'gen']), default=None)
@click.option('--steps', type=click.IntRange(min=0), default=None, help='Generative optimizer updates.')
@click.pass_context
@exit_on_error
def fuse(ctx, kind, steps):
	"""Fusion arms: trusted high-fidelity points added to the low-fidelity set."""
	config = _config(ctx, {'model': kind, 'generative.steps': steps})
	fusion = config['fusion']
	low = _load_dataset(_data_path(config, 'path', LOW_FILE))
	high = _load_dataset(_data_path(config, 'high_path', HIGH_FILE), Fidelity.HIGH)
	base = dataset.select(low, carbon_count=fusion['carbon_count'], name='base')
	if len(base) == 0:
		raise DataError('Empty base', 'no C%d points in the low-fidelity table' % fusion['carbon_count'])
	nist = _fixed_curve(high, fusion['pressure'], fusion['carbon_count'], fusion['temperatures'], 'nist_points')
	reference = _fixed_curve(high, fusion['pressure'], fusion['carbon_count'], fusion['reference_temperatures'], 'reference')
	model_settings = settings.model_settings(config)
	report = multifidelity.fusion_study(base, nist, reference, model_settings, tuple(fusion['arms']), settings.threads())
	rows, summary = _report_frames(report)
	_write_frame(rows, _out(config, 'fusion_report.csv'))
	_write_frame(summary, _out(config, 'fusion_summary.csv'))
	for n in fusion['arms']:
		_plot_rows(config, [r for r in report.rows if r['n_added'] == n], 'fusion_n%d.svg' % n,
			'%s, %d added points' % (model_settings.kind, n))
	for row in report.summary:
		click.echo('n_added=%d l2_mre=%.6g' % (row['n_added'], row['l2_mre']))
	if report.failures:
		raise ExperimentFailed('fusion', report.failures)


@cli.command()
@click.option('--steps', type=click.IntRange(min=0), default=None, help='Generative optimizer updates.')
@click.pass_context
@exit_on_error
def mf(ctx, steps):
	"""NARGP and multi-fidelity generative comparison at a fixed pressure."""
	config = _config(ctx, {'generative.steps': steps})
	section = config['multifidelity']
	p, c = section['pressure'], section['carbon_count']
	low_source = _load_dataset(_data_path(config, 'transcritical_path', TRANSCRITICAL_FILE))
	high_source = _load_dataset(_data_path(config, 'high_path', HIGH_FILE), Fidelity.HIGH)
	low = _fixed_curve(low_source, p, c, section['temperatures'], 'low')
	high = _fixed_curve(high_source, p, c, section['temperatures'], 'high')
	reference = _fixed_curve(high_source, p, c, section['holdout_temperatures'], 'holdout')
	pair = multifidelity.FidelityPair(low, high, dataset.varying_features(low))
	report = multifidelity.mf_experiment(pair, reference, settings.model_settings(config, 'gen'))
	rows, summary = _report_frames(report)
	_write_frame(rows, _out(config, 'mf_report.csv'))
	_write_frame(summary, _out(config, 'mf_summary.csv'))
	for label in ('nargp', 'mf_gen'):
		_plot_rows(config, [r for r in report.rows if r['model'] == label], 'mf_%s.svg' % label, label)
	for row in report.summary:
		click.echo('%s l2_mre=%.6g' % (row['model'], row['l2_mre']))
	if report.failures:
		raise ExperimentFailed('multi-fidelity', report.failures)


if __name__ == '__main__':
	cli()
