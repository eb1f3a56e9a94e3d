"""
Probabilistic conditional generative regressor.

A generator y = f(x, z) with a standard-normal latent z is trained against a
discriminator T(x, y) that separates data pairs from generated pairs. An
encoder maps generated pairs back to the latent (zhat = E(x, f(x, z))), and
its reconstruction error is the entropy regularizer that keeps the generator
from collapsing onto a single output per x.

Losses, with yhat = f(x, z):
	discriminator: -mean log sig(T(x, y)) - mean log(1 - sig(T(x, yhat)))
	generator:     -mean T(x, yhat) + lam * mean |zhat - z|^2
	encoder:       beta * lam * mean |zhat - z|^2
beta_role='data_fit' instead adds beta * mean (yhat - y)^2 to the generator
and trains the encoder on lam * mean |zhat - z|^2.

Predictive moments are Monte Carlo averages over latent draws.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy.special import expit
from tqdm import tqdm

import dataset
import numerics
from dataset import FEATURES, Prediction, Standardizer
from errors import DimensionMismatch, ModelFileError, NonFiniteLoss, PreconditionViolation

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
BETA_ROLES = ('encoder', 'data_fit')

# rows per forward pass when sampling many query points at once
SAMPLE_CHUNK_ROWS = 200000


@dataclass(frozen=True)
class Architecture:
	generator_hidden: Tuple[int, ...] = (100, 100, 100, 100)
	encoder_hidden: Tuple[int, ...] = (100, 100, 100, 100)
	discriminator_hidden: Tuple[int, ...] = (100, 100)


@dataclass(frozen=True)
class TrainConfig:
	steps: int = 50000
	learning_rate: float = 1e-4
	batch_size: int = 128
	disc_per_gen: str = '2:1'
	lam: float = 1.5
	beta: float = 0.5
	beta_role: str = 'encoder'
	latent_dim: int = 1
	seed: int = 0

	def __post_init__(self):
		if self.steps < 0:
			raise PreconditionViolation('Bad train config', 'steps must be >= 0')
		if self.lam < 0:
			raise PreconditionViolation('Bad train config', 'lambda must be >= 0')
		if self.batch_size < 1 or self.latent_dim < 1:
			raise PreconditionViolation('Bad train config', 'batch_size and latent_dim must be >= 1')
		if self.beta_role not in BETA_ROLES:
			raise PreconditionViolation('Bad train config', 'beta_role must be one of %s' % (BETA_ROLES,))
		numerics.parse_ratio(self.disc_per_gen)


@dataclass
class GenerativeModel:
	generator: numerics.MlpNetwork
	encoder: numerics.MlpNetwork
	discriminator: numerics.MlpNetwork
	latent_dim: int
	x_std: Standardizer
	y_std: Standardizer
	features: Tuple[str, ...] = FEATURES
	history: Dict[str, int] = field(default_factory=dict)

	def __post_init__(self):
		d = self.generator.n_inputs - self.latent_dim
		if self.discriminator.n_inputs != d + 1 or self.discriminator.n_outputs != 1:
			raise DimensionMismatch((d + 1, 1), (self.discriminator.n_inputs, self.discriminator.n_outputs))
		if self.generator.n_outputs != 1:
			raise DimensionMismatch(1, self.generator.n_outputs)

	@property
	def dim(self):
		return self.generator.n_inputs - self.latent_dim

	def predict(self, Xq, n_samples=2000, seed=0):
		return predict_moments(self, Xq, n_samples, seed)


def build_networks(d, arch, latent_dim, rng):
	generator = numerics.mlp_init([d + latent_dim] + list(arch.generator_hidden) + [1], rng)
	encoder = numerics.mlp_init([d + 1] + list(arch.encoder_hidden) + [latent_dim], rng)
	discriminator = numerics.mlp_init([d + 1] + list(arch.discriminator_hidden) + [1], rng)
	# untrained generator predicts the training mean
	generator.weights[-1][...] = 0.0
	return generator, encoder, discriminator


#------------------------ training ------------------------#
def _discriminator_update(D, opt_D, xb, yb, yhat):
	n = len(xb)
	t_real, c_real = D.forward(np.hstack([xb, yb]))
	t_fake, c_fake = D.forward(np.hstack([xb, yhat]))
	loss = np.mean(np.logaddexp(0.0, -t_real)) + np.mean(np.logaddexp(0.0, t_fake))
	g_real, _ = D.backward(c_real, -expit(-t_real) / n)
	g_fake, _ = D.backward(c_fake, expit(t_fake) / n)
	numerics.adam_step(opt_D, D.flat, g_real + g_fake)
	return float(loss)


def _generator_update(G, E, D, opt_G, opt_E, cfg, xb, yb, z, yhat, g_cache):
	n, d = xb.shape
	t_fake, c_fake = D.forward(np.hstack([xb, yhat]))
	adversarial = -np.mean(t_fake)
	_, dX_d = D.backward(c_fake, np.full_like(t_fake, -1.0 / n))
	dyhat = dX_d[:, d:]

	zhat, c_enc = E.forward(np.hstack([xb, yhat]))
	recon = np.mean(np.sum((zhat - z) ** 2, axis=1))
	g_enc, dX_e = E.backward(c_enc, 2.0 * (zhat - z) / n)
	dyhat = dyhat + cfg.lam * dX_e[:, d:]
	loss = adversarial + cfg.lam * recon

	if cfg.beta_role == 'data_fit':
		loss += cfg.beta * np.mean((yhat - yb) ** 2)
		dyhat = dyhat + cfg.beta * 2.0 * (yhat - yb) / n
		encoder_weight = cfg.lam
	else:
		encoder_weight = cfg.beta * cfg.lam

	g_gen, _ = G.backward(g_cache, dyhat)
	numerics.adam_step(opt_G, G.flat, g_gen)
	numerics.adam_step(opt_E, E.flat, encoder_weight * g_enc)
	return float(loss), float(recon)


def train_arrays(X, y, features, arch=Architecture(), cfg=TrainConfig(), verbose=False):
	X = np.asarray(X, dtype=float)
	y = np.asarray(y, dtype=float).ravel()
	if len(y) == 0:
		raise PreconditionViolation('Empty training set', 'generative training needs at least one point')
	features = tuple(features)
	if X.ndim != 2 or X.shape[1] != len(features):
		raise DimensionMismatch(len(features), X.shape)
	x_std = dataset.standardizer_from_array(X, features)
	y_std = dataset.standardizer_from_array(y[:, None], (dataset.TARGET,))
	Xs = x_std.transform(X)
	ys = y_std.transform(y[:, None])
	n, d = Xs.shape
	k = cfg.latent_dim

	rng = numerics.make_rng(cfg.seed)
	G, E, D = build_networks(d, arch, k, rng)
	opt_G = numerics.AdamState.create(len(G.flat), cfg.learning_rate)
	opt_E = numerics.AdamState.create(len(E.flat), cfg.learning_rate)
	opt_D = numerics.AdamState.create(len(D.flat), cfg.learning_rate)
	batch = min(cfg.batch_size, n)
	history = {'disc_updates': 0, 'gen_updates': 0}
	log.info("Training generative model on %d points, %d steps, ratio %s, lam=%g beta=%g (%s)",
		n, cfg.steps, cfg.disc_per_gen, cfg.lam, cfg.beta, cfg.beta_role)

	losses = {'disc': np.nan, 'gen': np.nan, 'recon': np.nan}
	schedule = numerics.update_schedule(cfg.disc_per_gen, cfg.steps)
	for step, player in enumerate(tqdm(schedule, total=cfg.steps, disable=not verbose, desc='training')):
		if batch < n:
			idx = rng.choice(n, batch, replace=False)
			xb, yb = Xs[idx], ys[idx]
		else:
			xb, yb = Xs, ys
		z = rng.standard_normal((len(xb), k))
		yhat, g_cache = G.forward(np.hstack([xb, z]))
		if player == 'disc':
			losses['disc'] = _discriminator_update(D, opt_D, xb, yb, yhat)
			history['disc_updates'] += 1
		else:
			losses['gen'], losses['recon'] = _generator_update(G, E, D, opt_G, opt_E, cfg, xb, yb, z, yhat, g_cache)
			history['gen_updates'] += 1
		current = losses['disc'] if player == 'disc' else losses['gen']
		if not np.isfinite(current):
			raise NonFiniteLoss(step, dict(losses))
		if step % 1000 == 0:
			log.debug("step %d: disc=%.5g gen=%.5g recon=%.5g", step, losses['disc'], losses['gen'], losses['recon'])

	log.info("Generative training done: %d disc / %d gen updates", history['disc_updates'], history['gen_updates'])
	return GenerativeModel(G, E, D, k, x_std, y_std, features, history)


def train(train_set, arch=Architecture(), cfg=TrainConfig(), features=FEATURES, verbose=False):
	if len(train_set) == 0:
		raise PreconditionViolation('Empty training set', 'generative training needs at least one point')
	return train_arrays(train_set.features(features), train_set.targets(), features, arch, cfg, verbose)


#------------------------ sampling ------------------------#
def _latent_draws(model, n_samples, seed):
	return numerics.make_rng(seed).standard_normal((n_samples, model.latent_dim))


def _standardized_samples(model, Xs, z):
	"""Generator outputs for every (query, draw) pair, shape (m, n_samples)."""
	m, n_samples = len(Xs), len(z)
	out = np.empty((m, n_samples))
	per_chunk = max(1, SAMPLE_CHUNK_ROWS // n_samples)
	for start in range(0, m, per_chunk):
		block = Xs[start:start + per_chunk]
		rows = np.hstack([np.repeat(block, n_samples, axis=0), np.tile(z, (len(block), 1))])
		y, _ = model.generator.forward(rows)
		out[start:start + len(block)] = y[:, 0].reshape(len(block), n_samples)
	return out


def _as_query(model, Xq):
	Xq = np.asarray(Xq, dtype=float)
	single = Xq.ndim == 1
	if single:
		Xq = Xq[None, :]
	if Xq.ndim != 2 or Xq.shape[1] != model.dim:
		raise DimensionMismatch(model.dim, Xq.shape[-1] if Xq.ndim else 0)
	return Xq, single


def sample(model, Xq, n_samples, seed=0):
	"""
	Density samples f(x, z_i) with z_i ~ N(0, I) from a seeded generator.
	A single query vector gives shape (n_samples,); a query matrix gives
	(m, n_samples), all rows sharing the same latent draws.
	"""
	if n_samples < 1:
		raise PreconditionViolation('Bad sample count', 'n_samples must be >= 1')
	Xq, single = _as_query(model, Xq)
	z = _latent_draws(model, n_samples, seed)
	ys = _standardized_samples(model, model.x_std.transform(Xq), z)
	samples = model.y_std.inverse_transform(ys[..., None])[..., 0]
	return samples[0] if single else samples


def predict_moments(model, Xq, n_samples=2000, seed=0):
	"""Monte Carlo mean and population variance of the predictive distribution."""
	if n_samples < 2:
		raise PreconditionViolation('Bad sample count', 'predictive moments need n_samples >= 2')
	samples = np.atleast_2d(sample(model, Xq, n_samples, seed))
	mean = samples.mean(axis=1)
	var = np.mean((samples - mean[:, None]) ** 2, axis=1)
	return Prediction(mean, var, n_samples)


#------------------------ serialization ------------------------#
def to_dict(model):
	return {
		'kind': 'generative',
		'format_version': FORMAT_VERSION,
		'latent': {'dim': model.latent_dim, 'prior': 'standard_normal'},
		'features': list(model.features),
		'generator': model.generator.to_dict(),
		'encoder': model.encoder.to_dict(),
		'discriminator': model.discriminator.to_dict(),
		'x_std': model.x_std.to_dict(),
		'y_std': model.y_std.to_dict(),
		'history': dict(model.history),
	}


def from_dict(doc):
	if doc.get('kind') != 'generative':
		raise ModelFileError('Wrong model kind', 'expected generative, got %r' % doc.get('kind'))
	if doc.get('format_version') != FORMAT_VERSION:
		raise ModelFileError('Unsupported model version', 'expected %d, got %r' % (FORMAT_VERSION, doc.get('format_version')))
	try:
		return GenerativeModel(
			numerics.MlpNetwork.from_dict(doc['generator']),
			numerics.MlpNetwork.from_dict(doc['encoder']),
			numerics.MlpNetwork.from_dict(doc['discriminator']),
			int(doc['latent']['dim']),
			Standardizer.from_dict(doc['x_std']),
			Standardizer.from_dict(doc['y_std']),
			tuple(doc['features']),
			dict(doc.get('history', {})))
	except KeyError as ex:
		raise ModelFileError('Malformed model file', 'missing field %s' % ex)


def save(model, path):
	with open(path, 'w', encoding='utf-8') as fh:
		json.dump(to_dict(model), fh)
	log.info("Saved generative model to %s", path)


def load(path):
	try:
		with open(path, encoding='utf-8') as fh:
			doc = json.load(fh)
	except (OSError, ValueError) as ex:
		raise ModelFileError('Unreadable model file', str(ex))
	return from_dict(doc)
