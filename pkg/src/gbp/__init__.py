"""Two-level conjugate hierarchical models (Gaussian, Poisson, Binomial).

Random-effect estimates by adjustment for density maximization, exact
Binomial posterior sampling by acceptance-rejection, and frequency method
checking of interval coverage.
"""

__version__ = "0.1.0"

from .config import RunConfig
from .models import Dataset, ModelKind, validate_dataset
from .adm import FitResult, fit
from .coverage import GenerativeSpec, resolve_spec, run_coverage
from .datasets import load_baseball, load_hospital, load_schools

__all__ = [
    "RunConfig", "Dataset", "ModelKind", "validate_dataset", "FitResult", "fit",
    "GenerativeSpec", "resolve_spec", "run_coverage",
    "load_baseball", "load_hospital", "load_schools",
]
