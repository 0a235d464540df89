"""JSON report documents for fits and coverage runs."""

from dataclasses import asdict, dataclass, field
import json

from .models import ModelKind

SCHEMA_VERSION = "1"


@dataclass
class ReportDocument:
    """Serialisable record of a fit, optionally with a coverage section.

    ``groups`` are in input order; ``display_order`` holds the 0-based row
    order used for printed tables.  ``provenance`` echoes the run
    configuration, seed and the data options needed to reload the dataset.
    """

    model: str
    method: str
    groups: list
    mean_row: dict
    hyper: dict
    regression: list
    display_order: list
    provenance: dict
    warnings: list = field(default_factory=list)
    sampler: dict | None = None
    coverage: dict | None = None
    schema_version: str = SCHEMA_VERSION

    @classmethod
    def from_fit(cls, fit, data_options=None):
        d = fit.dataset
        size_key = "se" if d.kind is ModelKind.GAUSSIAN else "n"
        groups = []
        for j in range(d.k):
            groups.append({
                "label": d.labels[j],
                "obs_mean": float(fit.obs_mean[j]),
                size_key: float(d.se_or_n[j]),
                "prior_mean": float(fit.prior_mean[j]),
                "shrinkage": float(fit.shrinkage[j]),
                "low_intv": float(fit.low[j]),
                "post_mean": float(fit.post_mean[j]),
                "upp_intv": float(fit.upp[j]),
                "post_sd": float(fit.post_sd[j]),
            })
        mean_row = fit.mean_row()
        mean_row[size_key] = mean_row.pop("se_or_n")
        hyper = {
            "post_mode_alpha": float(fit.alpha_hat),
            "post_sd_alpha": float(fit.alpha_sd),
            "A_or_r_name": "A" if d.kind is ModelKind.GAUSSIAN else "r",
            "post_mode_A_or_r": float(fit.A_or_r),
        }
        sampler = None
        if fit.sample is not None:
            s = fit.sample
            sampler = {"n_draws": int(s.n), "n_trials": int(s.weights.size),
                       "acceptance_rate": float(s.acceptance_rate),
                       "refill_rounds": int(s.refill_rounds)}
            hyper["adm_post_mode_alpha"] = float(fit.adm.alpha_hat)
        provenance = {
            "config": fit.config.to_dict(),
            "seed": int(fit.config.seed),
            "data": dict(data_options or {}),
        }
        return cls(model=d.kind.value, method=fit.method, groups=groups, mean_row=mean_row,
                   hyper=hyper, regression=fit.regression_table(),
                   display_order=[int(i) for i in fit.display_order()],
                   provenance=provenance, warnings=list(fit.warnings), sampler=sampler)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {version!r}")
        return cls(**data)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))

    def column(self, name):
        return [g[name] for g in self.groups]

