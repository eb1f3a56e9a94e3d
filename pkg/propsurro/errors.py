# Exceptions raised by the propsurro modules.
# The CLI maps the grouping bases onto exit codes (see main.py).


class PropsurroError(Exception):

	def __init__(self, error, description=''):
		super().__init__(error, description)
		self.error = error
		self.description = description

	def __repr__(self):
		return '%s: %s' % (type(self).__name__, self.error)

	def __str__(self):
		if self.description:
			return '%s. %s' % (self.error, self.description)
		return self.error


class DataError(PropsurroError):
	pass

class NumericalError(PropsurroError):
	pass

class TrainingError(PropsurroError):
	pass


#------------------------ dataset ------------------------#
class MissingColumn(DataError):
	def __init__(self, column):
		super().__init__('Missing column', 'required column %r not in header' % column)
		self.column = column

class NonNumericCell(DataError):
	def __init__(self, row, column, value):
		super().__init__('Non-numeric cell', 'row %s column %r: %r' % (row, column, value))
		self.row = row
		self.column = column

class NonPositiveValue(DataError):
	def __init__(self, row, column, value):
		super().__init__('Non-positive value', 'row %s column %r: %r' % (row, column, value))
		self.row = row
		self.column = column

class EmptyDataset(DataError):
	def __init__(self, name=''):
		super().__init__('Empty dataset', name)

class ZeroVariance(DataError):
	def __init__(self, feature):
		super().__init__('Zero variance', 'feature %r is constant' % feature)
		self.feature = feature

class KeyCollision(DataError):
	def __init__(self, key):
		super().__init__('Key collision', 'conflicting point at %r' % (key,))
		self.key = key

class OutOfDomain(DataError):
	pass

class PreconditionViolation(DataError):
	pass


#------------------------ numerics ------------------------#
class NotPositiveDefinite(NumericalError):
	def __init__(self, pivot):
		super().__init__('Matrix not positive definite', 'failing pivot %d' % pivot)
		self.pivot = pivot

class NonFiniteObjective(NumericalError):
	pass

class DimensionMismatch(NumericalError):
	def __init__(self, expected, got):
		super().__init__('Dimension mismatch', 'expected %s, got %s' % (expected, got))
		self.expected = expected
		self.got = got

class NonFiniteLoss(TrainingError):
	def __init__(self, step, snapshot):
		super().__init__('Non-finite loss', 'step %d, losses %s' % (step, snapshot))
		self.step = step
		self.snapshot = snapshot


class ExperimentFailed(TrainingError):
	def __init__(self, experiment, failures):
		super().__init__('Experiment failed', '%s: %d arm(s) failed: %s' % (experiment, len(failures), '; '.join('%s (%s)' % f for f in failures)))
		self.failures = failures


#------------------------ metrics ------------------------#
class LengthMismatch(PropsurroError):
	def __init__(self, n_truth, n_pred):
		super().__init__('Length mismatch', 'truth has %d entries, prediction %d' % (n_truth, n_pred))

class ZeroTruthValue(PropsurroError):
	def __init__(self, index):
		super().__init__('Zero truth value', 'at index %d' % index)
		self.index = index

class ConstantTruth(PropsurroError):
	pass

class ZeroMean(PropsurroError):
	pass


#------------------------ cli ------------------------#
class ConfigError(PropsurroError):
	def __init__(self, key, description=''):
		super().__init__('Config error at %r' % key, description)
		self.key = key

class ModelFileError(PropsurroError):
	pass
