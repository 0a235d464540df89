from dataclasses import asdict, dataclass, fields

from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    """Options shared by fitting, sampling and method checking.

    ``n_ar > 0`` switches the Binomial model to acceptance-rejection sampling
    with ``ar_factor * n_ar`` initial trials and skew-t scale multiplier
    ``trial_scale``.  ``t`` and ``u`` select the hyper-prior 1/(t + r)^(u+1).
    """

    model: str | None = None
    confidence: float = 0.95
    intercept: bool = True
    normal_ci: bool = False
    n_ar: int = 0
    ar_factor: int = 4
    trial_scale: float = 1.3
    t: float = 0.0
    u: float = 1.0
    seed: int = 0
    sort: bool = True

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.n_ar < 0:
            raise ConfigError("n_ar must be non-negative")
        if self.ar_factor < 1:
            raise ConfigError("ar_factor must be a positive integer")
        if not self.trial_scale > 0:
            raise ConfigError("trial_scale must be positive")
        if not (self.t >= 0 and self.u > 0):
            raise ConfigError("hyper-prior needs t >= 0 and u > 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})
