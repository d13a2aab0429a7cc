"""Exception types shared across the toolkit.

The CLI maps these onto exit codes, so the split matters:

* ParseError: an input file (BVH, URDF, native JSON, motion file) is
  malformed or uses an unsupported feature.
* ValidationError: inputs parse fine but violate a cross-cutting
  contract (unknown names in a config, widened joint limits, degenerate
  skeleton, mismatched frame counts, ...).
* SolverError: the IK solver failed to produce a step.
"""


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
