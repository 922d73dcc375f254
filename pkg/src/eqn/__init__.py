"""Full-label emotion intensity annotation: expand discrete gold labels
into continuous per-label scores via regression training and a
label-regression retraining loop."""

__version__ = "0.1.0"

from .corpus import Dataset, LabelVocabulary, Sample  # noqa: F401
from .errors import DataError, EqnError, NumericalError, UsageError  # noqa: F401
