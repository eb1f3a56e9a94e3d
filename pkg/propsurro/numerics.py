"""
Shared numerical kernels: Cholesky factorization and solves, an L-BFGS
minimizer with randomized restarts, Adam, and a tanh feed-forward network
with reverse-mode gradients.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import linalg
from scipy import optimize
from scipy.linalg import lapack

from errors import (DimensionMismatch, NonFiniteObjective, NotPositiveDefinite,
	NumericalError, PreconditionViolation)

log = logging.getLogger(__name__)

LBFGS_MEMORY = 10
LBFGS_MAX_ITER = 500
LBFGS_GTOL = 1e-8


def make_rng(seed):
	return np.random.default_rng(seed)


#------------------------ linear algebra ------------------------#
@dataclass(frozen=True)
class CholeskyFactor:
	L: np.ndarray

	@property
	def dimension(self):
		return self.L.shape[0]

	def solve(self, b):
		"""Solves (L L^T) x = b."""
		return linalg.cho_solve((self.L, True), b, check_finite=False)

	def solve_lower(self, b):
		return linalg.solve_triangular(self.L, b, lower=True, check_finite=False)

	def logdet(self):
		return 2.0 * np.sum(np.log(np.diag(self.L)))

	def inverse(self):
		"""(L L^T)^-1 from the factor, via LAPACK potri."""
		inv, info = lapack.dpotri(self.L, lower=1)
		if info != 0:
			raise NumericalError('dpotri failed', 'info %d' % info)
		return np.tril(inv) + np.tril(inv, -1).T


def cholesky(A, symmetry_tol=1e-10):
	A = np.asarray(A, dtype=float)
	if A.ndim != 2 or A.shape[0] != A.shape[1]:
		raise DimensionMismatch('square matrix', A.shape)
	scale = max(np.max(np.abs(A)), 1.0) if A.size else 1.0
	if A.size and np.max(np.abs(A - A.T)) > symmetry_tol * scale:
		raise PreconditionViolation('Matrix not symmetric', 'asymmetry above %g' % symmetry_tol)
	c, info = lapack.dpotrf(A, lower=1, clean=1)
	if info > 0:
		raise NotPositiveDefinite(info - 1)
	if info < 0:
		raise NumericalError('dpotrf failed', 'illegal argument %d' % -info)
	return CholeskyFactor(c)


#------------------------ L-BFGS ------------------------#
def _guarded(f):
	def wrapper(x):
		value, grad = f(x)
		value = float(value)
		grad = np.asarray(grad, dtype=float)
		if not np.isfinite(value) or not np.all(np.isfinite(grad)):
			raise NonFiniteObjective('Non-finite objective', 'at x=%s' % np.array2string(x, precision=4))
		return value, grad
	return wrapper


def lbfgs_minimize(f, x0, restarts=10, seed=0, bounds=None, init_bounds=None,
		max_iter=LBFGS_MAX_ITER, gtol=LBFGS_GTOL, ftol=0.0, memory=LBFGS_MEMORY):
	"""
	Minimizes f (returning value and gradient) with L-BFGS from x0 and from
	restarts - 1 further points drawn uniformly inside init_bounds (or bounds).

	ftol is the relative reduction stop of L-BFGS-B; 0 runs until gtol or max_iter.
	Restarts whose objective turns non-finite or whose factorization fails
	are dropped; the best surviving run is returned as (x*, f*).
	"""
	x0 = np.asarray(x0, dtype=float)
	rng = make_rng(seed)
	box = init_bounds if init_bounds is not None else bounds
	starts = [x0]
	for _ in range(max(restarts, 1) - 1):
		if box is not None:
			lo = np.array([b[0] for b in box], dtype=float)
			hi = np.array([b[1] for b in box], dtype=float)
			starts.append(rng.uniform(lo, hi))
		else:
			starts.append(x0 + rng.standard_normal(x0.shape))

	objective = _guarded(f)
	best_x, best_f = None, np.inf
	for i, start in enumerate(starts):
		try:
			res = optimize.minimize(objective, start, jac=True, method='L-BFGS-B', bounds=bounds,
				options={'maxcor': memory, 'maxiter': max_iter, 'gtol': gtol, 'ftol': ftol})
		except NumericalError as ex:
			log.warning("Restart %d aborted: %s", i, ex)
			continue
		log.debug("Restart %d: f=%.6g after %d iterations (%s)", i, res.fun, res.nit, res.message)
		if np.isfinite(res.fun) and res.fun < best_f:
			best_x, best_f = np.array(res.x), float(res.fun)
	if best_x is None:
		raise NonFiniteObjective('All restarts failed', '%d starts' % len(starts))
	return best_x, best_f


#------------------------ gradient checking ------------------------#
def check_gradient(f, x, h=1e-6):
	"""
	Central finite-difference check of f's analytic gradient; returns the
	largest deviation relative to the largest gradient entry.
	"""
	x = np.asarray(x, dtype=float)
	_, grad = f(x)
	grad = np.asarray(grad, dtype=float)
	fd = np.zeros_like(x)
	for i in range(len(x)):
		step = np.zeros_like(x)
		step[i] = h
		fd[i] = (f(x + step)[0] - f(x - step)[0]) / (2 * h)
	scale = max(np.max(np.abs(grad)), np.max(np.abs(fd)), 1e-12)
	return float(np.max(np.abs(grad - fd)) / scale)


#------------------------ Adam ------------------------#
@dataclass
class AdamState:
	learning_rate: float
	m: np.ndarray
	v: np.ndarray
	beta1: float = 0.9
	beta2: float = 0.999
	eps: float = 1e-8
	step: int = 0

	@classmethod
	def create(cls, dim, learning_rate=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
		return cls(learning_rate, np.zeros(dim), np.zeros(dim), beta1, beta2, eps)


def adam_step(state, params, grad):
	"""Bias-corrected Adam update, applied to params in place."""
	grad = np.asarray(grad, dtype=float)
	if params.shape != grad.shape or params.shape != state.m.shape:
		raise DimensionMismatch(state.m.shape, (params.shape, grad.shape))
	state.step += 1
	state.m *= state.beta1
	state.m += (1 - state.beta1) * grad
	state.v *= state.beta2
	state.v += (1 - state.beta2) * grad * grad
	m_hat = state.m / (1 - state.beta1 ** state.step)
	v_hat = state.v / (1 - state.beta2 ** state.step)
	params -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
	return params, state


#------------------------ feed-forward network ------------------------#
class MlpNetwork:
	"""
	Fully connected network, tanh on hidden layers and identity on the output.
	All weights and biases are views into one flat parameter vector so an
	optimizer can update them in one shot. Weight i has shape
	(widths[i+1], widths[i]).
	"""

	def __init__(self, widths, flat=None):
		self.widths = [int(w) for w in widths]
		if len(self.widths) < 2:
			raise PreconditionViolation('Bad network widths', 'need input and output widths, got %s' % widths)
		shapes = [(self.widths[i + 1], self.widths[i]) for i in range(len(self.widths) - 1)]
		size = sum(r * c + r for r, c in shapes)
		if flat is None:
			flat = np.zeros(size)
		flat = np.asarray(flat, dtype=float)
		if flat.shape != (size,):
			raise DimensionMismatch((size,), flat.shape)
		self.flat = flat
		self.weights = []
		self.biases = []
		offset = 0
		for r, c in shapes:
			self.weights.append(self.flat[offset:offset + r * c].reshape(r, c))
			offset += r * c
			self.biases.append(self.flat[offset:offset + r])
			offset += r

	@property
	def n_inputs(self):
		return self.widths[0]

	@property
	def n_outputs(self):
		return self.widths[-1]

	def forward(self, X):
		"""Batch forward pass: X is (n, n_inputs); returns output and the activations cache."""
		X = np.asarray(X, dtype=float)
		if X.ndim != 2 or X.shape[1] != self.n_inputs:
			raise DimensionMismatch(('n', self.n_inputs), X.shape)
		acts = [X]
		h = X
		last = len(self.weights) - 1
		for i, (W, b) in enumerate(zip(self.weights, self.biases)):
			h = h @ W.T + b
			if i < last:
				h = np.tanh(h)
			acts.append(h)
		return h, acts

	def backward(self, acts, dout):
		"""Reverse pass from dL/d(output); returns (flat parameter gradient, dL/dX)."""
		grad = np.zeros_like(self.flat)
		gw, gb = self._views(grad)
		delta = np.asarray(dout, dtype=float)
		last = len(self.weights) - 1
		for i in range(last, -1, -1):
			if i < last:
				delta = delta * (1.0 - acts[i + 1] ** 2)
			gw[i][...] = delta.T @ acts[i]
			gb[i][...] = delta.sum(axis=0)
			delta = delta @ self.weights[i]
		return grad, delta

	def _views(self, flat):
		shadow = MlpNetwork(self.widths, flat)
		return shadow.weights, shadow.biases

	def to_dict(self):
		return {'widths': self.widths, 'params': self.flat.tolist()}

	@classmethod
	def from_dict(cls, doc):
		return cls(doc['widths'], np.array(doc['params'], dtype=float))


def mlp_init(widths, rng):
	"""Xavier-uniform weights, zero biases."""
	net = MlpNetwork(widths)
	for W in net.weights:
		fan_out, fan_in = W.shape
		limit = np.sqrt(6.0 / (fan_in + fan_out))
		W[...] = rng.uniform(-limit, limit, size=W.shape)
	return net


def mlp_forward(net, x):
	x = np.asarray(x, dtype=float)
	if x.ndim != 1 or x.shape[0] != net.n_inputs:
		raise DimensionMismatch((net.n_inputs,), x.shape)
	out, _ = net.forward(x[None, :])
	return out[0]


def mlp_gradient(net, loss, x):
	"""
	Exact gradient of loss(output) w.r.t. every weight and bias, as a flat
	vector laid out like net.flat. loss returns (value, d value / d output).
	"""
	x = np.asarray(x, dtype=float)
	if x.ndim != 1 or x.shape[0] != net.n_inputs:
		raise DimensionMismatch((net.n_inputs,), x.shape)
	out, acts = net.forward(x[None, :])
	_, dout = loss(out[0])
	grad, _ = net.backward(acts, np.asarray(dout, dtype=float).reshape(1, -1))
	return grad


#------------------------ update schedule ------------------------#
def parse_ratio(ratio):
	"""'2:1' / '1:5' / Fraction / (disc, gen) -> (disc, gen) integer counts."""
	if isinstance(ratio, str):
		parts = ratio.split(':')
		if len(parts) == 2:
			disc, gen = int(parts[0]), int(parts[1])
		else:
			frac = Fraction(ratio)
			disc, gen = frac.numerator, frac.denominator
	elif isinstance(ratio, (tuple, list)):
		disc, gen = int(ratio[0]), int(ratio[1])
	else:
		frac = Fraction(ratio).limit_denominator(1000)
		disc, gen = frac.numerator, frac.denominator
	if disc <= 0 or gen <= 0:
		raise PreconditionViolation('Bad update ratio', '%r' % (ratio,))
	return disc, gen


def update_schedule(ratio, steps):
	"""Yields 'disc' or 'gen' per step: disc updates first, then gen, cyclically."""
	disc, gen = parse_ratio(ratio)
	cycle = disc + gen
	for step in range(steps):
		yield 'disc' if step % cycle < disc else 'gen'
