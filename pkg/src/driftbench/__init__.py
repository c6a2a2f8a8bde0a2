"""driftbench: detector evaluation under domain shift.

Computes pixel-wise dropout-uncertainty maps, cross-pass association
uncertainty, detection calibration error, background-wise average
precision, and cross-domain shift statistics from serialized detector
outputs; includes a deterministic synthetic-fixture generator and a
desk-scale adversarial adaptation simulation.
"""

__version__ = "0.1.0"

from .errors import UsageError, ValidationError

__all__ = ["UsageError", "ValidationError", "__version__"]
