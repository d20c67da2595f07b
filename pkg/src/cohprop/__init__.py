"""Coherent-state propagation for driven linear optics with Kerr gates."""
from .errors import (ConditioningError, CutoffError, DimensionError, EmptyStateError,
                     OracleRefusal, ValidationError)
from .state import (CoherentSuperposition, coherent_overlap, inner_product, merge_duplicates,
                    norm, normalize_state, product_overlap)

__version__ = "0.1.0"
