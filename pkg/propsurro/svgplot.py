"""
SVG rendering of prediction series and cv heat maps from Jinja2 templates.
Output depends only on the inputs; no timestamps or random ids.
"""
import logging
import os

import jinja2
import numpy as np

log = logging.getLogger(__name__)

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'templates')
WIDTH, HEIGHT = 640, 420
FRAME = {'left': 70, 'right': 560, 'top': 36, 'bottom': 370}
N_TICKS = 5
# light yellow -> dark blue
LOW_COLOR = (255, 247, 188)
HIGH_COLOR = (8, 48, 107)


def _environment():
	return jinja2.Environment(
		loader=jinja2.FileSystemLoader(TEMPLATE_DIR),
		autoescape=jinja2.select_autoescape(['svg']),
		trim_blocks=True,
		lstrip_blocks=True,
		undefined=jinja2.StrictUndefined,
	)


def _fmt(v):
	return '%.2f' % v


def _limits(values, pad=0.05):
	values = np.asarray(values, dtype=float)
	values = values[np.isfinite(values)]
	if values.size == 0:
		return 0.0, 1.0
	lo, hi = float(values.min()), float(values.max())
	if hi == lo:
		lo, hi = lo - 0.5, hi + 0.5
	span = hi - lo
	return lo - pad * span, hi + pad * span


def _scale(values, lo, hi, px_lo, px_hi):
	return px_lo + (np.asarray(values, dtype=float) - lo) / (hi - lo) * (px_hi - px_lo)


def _ticks(lo, hi, px_lo, px_hi, fmt='%g'):
	return [{'pos': _fmt(_scale(v, lo, hi, px_lo, px_hi)), 'label': fmt % v} for v in np.linspace(lo, hi, N_TICKS)]


def series_svg(temperatures, prediction, title='', reference=None, k=2.0,
		xlabel='temperature (K)', ylabel='density (kg/m3)'):
	"""
	Mean polyline and the mean +/- k sd band of prediction over temperatures.
	reference is an optional iterable of (temperature, density) markers.
	"""
	T = np.asarray(temperatures, dtype=float)
	lower, upper = prediction.band(k)
	reference = [(float(t), float(r)) for t, r in (reference or [])]
	ref_T = [t for t, _ in reference]
	ref_y = [r for _, r in reference]
	x_lo, x_hi = _limits(np.concatenate([T, ref_T]), pad=0.0)
	y_lo, y_hi = _limits(np.concatenate([lower, upper, ref_y]))

	def sx(v):
		return _scale(v, x_lo, x_hi, FRAME['left'], FRAME['right'])

	def sy(v):
		return _scale(v, y_lo, y_hi, FRAME['bottom'], FRAME['top'])

	xs, mean_ys = sx(T), sy(prediction.mean)
	upper_pts = ['%s,%s' % (_fmt(x), _fmt(y)) for x, y in zip(xs, sy(upper))]
	lower_pts = ['%s,%s' % (_fmt(x), _fmt(y)) for x, y in zip(xs[::-1], sy(lower)[::-1])]
	band = 'M %s Z' % ' L '.join(upper_pts + lower_pts) if len(T) else ''
	markers = [{'x': _fmt(sx(t)), 'y': _fmt(sy(r))} for t, r in reference]
	return _environment().get_template('series.svg').render(
		width=WIDTH, height=HEIGHT, frame=FRAME, title=title, xlabel=xlabel, ylabel=ylabel,
		xticks=_ticks(x_lo, x_hi, FRAME['left'], FRAME['right']),
		yticks=_ticks(y_lo, y_hi, FRAME['bottom'], FRAME['top'], '%.0f'),
		band=band,
		mean=' '.join('%s,%s' % (_fmt(x), _fmt(y)) for x, y in zip(xs, mean_ys)),
		markers=markers,
	)


def _color(frac):
	frac = min(max(frac, 0.0), 1.0)
	rgb = [round(a + (b - a) * frac) for a, b in zip(LOW_COLOR, HIGH_COLOR)]
	return '#%02x%02x%02x' % tuple(rgb)


def cvmap_svg(cvmap, title='coefficient of variation'):
	"""Heat map over log10 pressure (x) and temperature (y); invalid cells are hatched."""
	T = cvmap.temperatures
	n_T, n_p = cvmap.shape
	cell_w = (FRAME['right'] - FRAME['left']) / n_p
	cell_h = (FRAME['bottom'] - FRAME['top']) / n_T
	valid_cv = cvmap.cv[cvmap.valid]
	cv_lo, cv_hi = (float(valid_cv.min()), float(valid_cv.max())) if valid_cv.size else (0.0, 1.0)
	span = cv_hi - cv_lo if cv_hi > cv_lo else 1.0

	cells = []
	for i in range(n_T):
		for j in range(n_p):
			ok = bool(cvmap.valid[i, j])
			cells.append({
				'x': _fmt(FRAME['left'] + j * cell_w),
				# highest temperature at the top
				'y': _fmt(FRAME['bottom'] - (i + 1) * cell_h),
				'w': _fmt(cell_w),
				'h': _fmt(cell_h),
				'valid': ok,
				'color': _color((cvmap.cv[i, j] - cv_lo) / span) if ok else '',
			})
	n_legend = 20
	legend_h = (FRAME['bottom'] - FRAME['top']) / n_legend
	legend = [{'y': _fmt(FRAME['bottom'] - (s + 1) * legend_h), 'h': _fmt(legend_h), 'color': _color(s / (n_legend - 1))}
		for s in range(n_legend)]
	x_ticks = [{'pos': _fmt(FRAME['left'] + (j + 0.5) * cell_w), 'label': '%.3g' % cvmap.pressures[j]}
		for j in np.linspace(0, n_p - 1, min(N_TICKS, n_p)).round().astype(int)]
	y_ticks = [{'pos': _fmt(FRAME['bottom'] - (i + 0.5) * cell_h), 'label': '%g' % T[i]}
		for i in np.linspace(0, n_T - 1, min(N_TICKS, n_T)).round().astype(int)]
	if not cvmap.valid.all():
		log.debug("cv heat map: %d invalid cells hatched", int((~cvmap.valid).sum()))
	return _environment().get_template('cvmap.svg').render(
		width=WIDTH + 60, height=HEIGHT, frame=FRAME, title=title, cells=cells, legend=legend,
		xticks=x_ticks, yticks=y_ticks, cv_min='%.3g' % cv_lo, cv_max='%.3g' % cv_hi,
	)


def write(path, svg):
	directory = os.path.dirname(path)
	if directory:
		os.makedirs(directory, exist_ok=True)
	with open(path, 'w', encoding='utf-8') as f:
		f.write(svg)
	log.info("Wrote %s", path)
	return path
