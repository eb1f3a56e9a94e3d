"""
Analytic alkane-like density oracle rho(p, T, C), used in place of
molecular-dynamics tables.

	rho = liquid(T, C) * s + gas(p, T) * (1 - s),   s = sigmoid((T0(p, C) - T) / w(p))

The transition centre is tied to the width,
	T0(p, C) - T_ref = (Tc(C) - T_ref) * w(p) / w(0),
which keeps the sigmoid argument nondecreasing in p for every T >= T_ref, so
density rises with pressure while the transition sharpens at low pressure.
The liquid branch always lies above the gas branch inside the domain, which
makes density strictly decreasing in T.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

import numerics
from dataset import DataPoint, Dataset, Fidelity
from errors import OutOfDomain

log = logging.getLogger(__name__)

PRESSURE_DOMAIN = (1.0, 200.0)
TEMPERATURE_DOMAIN = (300.0, 950.0)
CARBON_DOMAIN = (7, 16)

GRID_PRESSURES = (3.0, 4.0, 6.0, 8.0, 10.0, 20.0, 100.0, 150.0)
GRID_TEMPERATURES = tuple(float(t) for t in range(320, 901, 20))
GRID_CARBONS = (8, 9, 10, 12, 16)
# fixed-pressure studies on n-dodecane
DODECANE = 12
HEPTANE = 7
FUSION_PRESSURE = 2.0
FUSION_TEMPERATURES = (660.0, 680.0, 700.0)
MF_TEMPERATURES = (320.0, 440.0, 500.0, 620.0, 660.0, 680.0, 700.0)


@dataclass(frozen=True)
class OracleParams:
	# liquid reference density rho_ref(C) = a - b / C at T_ref
	liquid_a: float = 820.0
	liquid_b: float = 900.0
	thermal_expansion: float = 6e-4
	t_ref: float = 300.0
	# Tc(C) = scale * (a + b ln C)
	center_a: float = 110.0
	center_b: float = 221.0
	center_scale: float = 0.95
	center_shift: float = 0.0
	# w(p) = sharpen * (w0 + w1 p)
	width_0: float = 12.0
	width_slope: float = 0.8
	sharpen: float = 1.0
	# gas(p, T) = scale * (t_gas / T) * p / (p + p_half)
	gas_scale: float = 250.0
	gas_t_ref: float = 600.0
	gas_p_half: float = 20.0
	noise_sd: float = 0.0
	seed: int = 0


def high_fidelity(params=OracleParams(), shift_k=-5.0, sharpen=0.9):
	"""Discrepant variant: shifted transition centre and a sharper transition."""
	return replace(params, center_shift=params.center_shift + shift_k, sharpen=params.sharpen * sharpen)


def liquid_density(T, C, params=OracleParams()):
	return (params.liquid_a - params.liquid_b / C) * (1.0 - params.thermal_expansion * (T - params.t_ref))


def gas_density(p, T, params=OracleParams()):
	return params.gas_scale * (params.gas_t_ref / T) * p / (p + params.gas_p_half)


def transition_width(p, params=OracleParams()):
	return params.sharpen * (params.width_0 + params.width_slope * p)


def transition_center(p, C, params=OracleParams()):
	tc = params.center_scale * (params.center_a + params.center_b * np.log(C)) + params.center_shift
	return params.t_ref + (tc - params.t_ref) * transition_width(p, params) / transition_width(0.0, params)


def _check_domain(p, T, C):
	for name, values, (lo, hi) in (('pressure', p, PRESSURE_DOMAIN), ('temperature', T, TEMPERATURE_DOMAIN),
			('carbon_count', C, CARBON_DOMAIN)):
		values = np.asarray(values, dtype=float)
		if np.any(values < lo) or np.any(values > hi):
			raise OutOfDomain('Out of oracle domain', '%s outside [%g, %g]' % (name, lo, hi))


def oracle_density(p, T, C, params=OracleParams()):
	"""Noise-free density in kg/m^3; accepts scalars or broadcastable arrays."""
	_check_domain(p, T, C)
	p, T, C = (np.asarray(v, dtype=float) for v in (p, T, C))
	arg = (transition_center(p, C, params) - T) / transition_width(p, params)
	rho = liquid_density(T, C, params) * expit(arg) + gas_density(p, T, params) * expit(-arg)
	return float(rho) if rho.ndim == 0 else rho


def generate_table(pressures, temperatures, carbons, params=OracleParams(), fidelity=Fidelity.LOW, name='synthetic'):
	"""Full Cartesian grid, carbon-major, with optional seeded Gaussian noise."""
	grid = [(float(p), float(T), int(C)) for C in carbons for p in pressures for T in temperatures]
	if not grid:
		return Dataset((), name)
	P, T, C = (np.array(col) for col in zip(*grid))
	rho = oracle_density(P, T, C, params)
	if params.noise_sd > 0:
		rho = rho + numerics.make_rng(params.seed).normal(0.0, params.noise_sd, size=len(grid))
	points = tuple(DataPoint(p, t, c, float(r), fidelity) for (p, t, c), r in zip(grid, np.atleast_1d(rho)))
	log.info("Generated %d oracle points (%s fidelity)", len(points), fidelity.value)
	return Dataset(points, name)
