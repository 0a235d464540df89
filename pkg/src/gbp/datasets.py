"""CSV ingestion and the bundled example datasets."""

import csv
from dataclasses import dataclass
from importlib import resources
import io

import numpy as np

from .errors import ConfigError, DataFormatError
from .models import Dataset, ModelKind

BUNDLED = ("hospital", "schools", "baseball")


@dataclass(frozen=True)
class Table:
    """Header plus raw string cells, with the source line of every row."""

    header: tuple
    rows: tuple
    lines: tuple

    def __len__(self):
        return len(self.rows)

    def has(self, name):
        return name in self.header

    def column(self, name):
        """Numeric column; raises DataFormatError with the offending line."""
        if name not in self.header:
            raise DataFormatError(f"missing column {name!r} (header: {', '.join(self.header)})")
        idx = self.header.index(name)
        out = np.empty(len(self.rows))
        for i, (row, line) in enumerate(zip(self.rows, self.lines)):
            cell = row[idx].strip()
            try:
                out[i] = float(cell)
            except ValueError:
                raise DataFormatError(f"column {name!r}: {cell!r} is not a number", line) from None
        return out

    def text_column(self, name):
        idx = self.header.index(name)
        return tuple(row[idx].strip() for row in self.rows)


def parse_csv(text):
    """Parse CSV text with a header row; blank lines and '#' comments are skipped."""
    header, rows, lines = None, [], []
    reader = csv.reader(io.StringIO(text))
    try:
        for record in reader:
            line = reader.line_num
            if not record or all(not c.strip() for c in record) or record[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = tuple(c.strip() for c in record)
                if len(set(header)) != len(header):
                    raise DataFormatError("duplicate column names in header", line)
                continue
            if len(record) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, found {len(record)}", line)
            rows.append(tuple(record))
            lines.append(line)
    except csv.Error as exc:
        raise DataFormatError(str(exc), reader.line_num) from None
    return Table(header or (), tuple(rows), tuple(lines))


def read_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path} is not valid UTF-8: {exc}") from None
    return parse_csv(text)


def dataset_from_table(table, model, prior_mean=None, covariates=(), intercept=True):
    """Build a Dataset from a parsed table.

    ``prior_mean`` is a number, ``"@column"``, or None (then a ``prior_mean``
    column is used if present).
    """
    kind = ModelKind.parse(model)
    size_col = "se" if kind is ModelKind.GAUSSIAN else "n"
    covariates = tuple(c for c in (covariates or ()) if c)
    if len(table) == 0:
        return Dataset.build(kind, [], [], prior_mean=prior_mean if _is_number(prior_mean) else None,
                             intercept=intercept)
    y = table.column("y")
    size = table.column(size_col)
    pm = None
    if isinstance(prior_mean, str) and prior_mean.startswith("@"):
        pm = table.column(prior_mean[1:])
    elif prior_mean is not None:
        if not _is_number(prior_mean):
            raise ConfigError(f"prior mean must be a number or @column, got {prior_mean!r}")
        pm = float(prior_mean)
    elif table.has("prior_mean") and not covariates:
        pm = table.column("prior_mean")
    X = np.column_stack([table.column(c) for c in covariates]) if covariates else None
    used = {"y", size_col, "prior_mean", *covariates}
    label_col = next((h for h in table.header if h not in used), None)
    labels = table.text_column(label_col) if label_col else None
    return Dataset.build(kind, y, size, covariates=X, prior_mean=pm, intercept=intercept,
                         labels=labels, covariate_names=covariates)


def _is_number(v):
    if v is None:
        return False
    try:
        float(v)
        return True
    except (TypeError, ValueError):
        return False


def bundled_path(name):
    if name not in BUNDLED:
        raise ConfigError(f"unknown bundled dataset {name!r}; choose from {', '.join(BUNDLED)}")
    return resources.files("gbp") / "data" / f"{name}.csv"


def load_bundled_table(name):
    return parse_csv(bundled_path(name).read_text(encoding="utf-8"))


def load_hospital():
    """Poisson example: 31 hospitals with a known prior mean of 0.03."""
    return dataset_from_table(load_bundled_table("hospital"), "poisson", prior_mean=0.03)


def load_schools():
    """Gaussian example: eight schools, intercept-only regression."""
    return dataset_from_table(load_bundled_table("schools"), "gaussian")


def load_baseball():
    """Binomial example: 18 players with an outfielder indicator covariate."""
    return dataset_from_table(load_bundled_table("baseball"), "binomial", covariates=("outfielder",))
