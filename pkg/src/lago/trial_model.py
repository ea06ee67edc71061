"""Trial configuration, grouped-binomial observation records, and stage data IO.

A trial is configured once (components with dose bounds and cost polynomials,
tailoring covariates, number of stages) and then fed stage-wise observation
CSVs. All types are immutable after construction; operations are pure.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import DataError

PERIODS = ("control", "baseline", "intervention")

_GRID_EPS = 1e-9


@dataclass(frozen=True)
class ComponentSpec:
    """One intervention component: dose bounds, grid step, and cost polynomial.

    `cost_poly` holds (c1, c2, c3) for cost = c1*x + c2*x^2 + c3*x^3 in
    currency units.
    """

    name: str
    unit: str
    lower: float
    upper: float
    step: float
    cost_poly: tuple[float, float, float] = (0.0, 0.0, 0.0)
    expected_or_per_unit: float | None = None

    def grid(self) -> list[float]:
        """Dose grid {lower, lower+step, ...} up to upper."""
        n = self.grid_count() - 1
        return [self.lower + k * self.step for k in range(n + 1)]

    def grid_count(self) -> int:
        span = self.upper - self.lower
        return int(math.floor(span / self.step + _GRID_EPS)) + 1

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "unit": self.unit,
            "lower": self.lower,
            "upper": self.upper,
            "step": self.step,
            "cost_poly": list(self.cost_poly),
            "expected_or_per_unit": self.expected_or_per_unit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentSpec":
        poly = tuple(float(c) for c in d.get("cost_poly", (0.0, 0.0, 0.0)))
        if len(poly) != 3:
            raise DataError(f"component {d.get('name')!r}: cost_poly needs 3 coefficients")
        orpu = d.get("expected_or_per_unit")
        return cls(
            name=str(d["name"]),
            unit=str(d.get("unit", "")),
            lower=float(d["lower"]),
            upper=float(d["upper"]),
            step=float(d["step"]),
            cost_poly=poly,  # type: ignore[arg-type]
            expected_or_per_unit=None if orpu is None else float(orpu),
        )


@dataclass(frozen=True)
class CovariateSpec:
    """A numeric tailoring covariate and its default optimization value."""

    name: str
    reference_value: float = 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "reference_value": self.reference_value}

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateSpec":
        return cls(name=str(d["name"]), reference_value=float(d.get("reference_value", 0.0)))


@dataclass(frozen=True)
class TrialConfig:
    """Full trial configuration: components, covariates, stage count, clustering."""

    components: tuple[ComponentSpec, ...]
    covariates: tuple[CovariateSpec, ...] = ()
    num_stages: int = 1
    icc: float | None = None
    currency_label: str = "$"
    fixed_cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @property
    def component_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.components)

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.covariates)

    def reference_profile(self) -> tuple[float, ...]:
        return tuple(c.reference_value for c in self.covariates)

    def to_dict(self) -> dict:
        return {
            "components": [c.to_dict() for c in self.components],
            "covariates": [c.to_dict() for c in self.covariates],
            "num_stages": self.num_stages,
            "icc": self.icc,
            "currency_label": self.currency_label,
            "fixed_cost": self.fixed_cost,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        try:
            components = tuple(ComponentSpec.from_dict(c) for c in d["components"])
        except KeyError as exc:
            raise DataError(f"config: missing key {exc}") from exc
        covariates = tuple(CovariateSpec.from_dict(c) for c in d.get("covariates", ()))
        icc = d.get("icc")
        return cls(
            components=components,
            covariates=covariates,
            num_stages=int(d.get("num_stages", 1)),
            icc=None if icc is None else float(icc),
            currency_label=str(d.get("currency_label", "$")),
            fixed_cost=float(d.get("fixed_cost", 0.0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "TrialConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise DataError("config JSON must be an object")
        return cls.from_dict(doc)


@dataclass(frozen=True)
class ObservationRecord:
    """One grouped-binomial row: delivered doses, covariates, events/trials.

    Control and baseline periods are zero-dose by construction; a trials=1 row
    expresses a Bernoulli outcome.
    """

    stage: int
    cluster_id: str
    period: str
    doses: tuple[float, ...]
    covariates: tuple[float, ...]
    events: int
    trials: int

    def __post_init__(self):
        object.__setattr__(self, "doses", tuple(self.doses))
        object.__setattr__(self, "covariates", tuple(self.covariates))


@dataclass(frozen=True)
class StageDataset:
    """All observation records of one stage."""

    stage_index: int
    records: tuple[ObservationRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for r in self.records:
            if r.stage != self.stage_index:
                raise DataError(
                    f"record from stage {r.stage} placed in stage {self.stage_index} dataset"
                )


@dataclass(frozen=True)
class CombinedDataset:
    """Concatenated records of stages 1..upto, in stage order."""

    records: tuple[ObservationRecord, ...]
    upto: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def n_rows(self) -> int:
        return len(self.records)


@dataclass
class ValidationReport:
    """All content violations found in a config; empty list means valid."""

    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def validate_config(config: TrialConfig) -> ValidationReport:
    """Check every config invariant; collects violations instead of raising."""
    v: list[str] = []
    names = [c.name for c in config.components]
    if len(set(names)) != len(names):
        v.append("component names are not unique")
    if not config.components:
        v.append("config has no components")
    for c in config.components:
        tag = f"component {c.name!r}"
        if not (math.isfinite(c.lower) and math.isfinite(c.upper)):
            v.append(f"{tag}: bounds must be finite")
            continue
        if c.lower > c.upper:
            v.append(f"{tag}: lower > upper ({c.lower} > {c.upper})")
        if not (c.step > 0):
            v.append(f"{tag}: step must be > 0 (got {c.step})")
        elif c.lower <= c.upper:
            # grid must advance in floating point and land within one step of upper
            if c.lower + c.step == c.lower and c.upper > c.lower:
                v.append(f"{tag}: step {c.step} is below float resolution at {c.lower}")
            else:
                last = c.grid()[-1]
                if last + c.step <= c.upper - _GRID_EPS:
                    v.append(f"{tag}: grid stops at {last}, more than one step from upper {c.upper}")
        if not all(math.isfinite(k) for k in c.cost_poly):
            v.append(f"{tag}: cost polynomial coefficients must be finite")
        if c.expected_or_per_unit is not None and not (c.expected_or_per_unit > 0):
            v.append(f"{tag}: expected_or_per_unit must be positive")
    cov_names = [c.name for c in config.covariates]
    if len(set(cov_names)) != len(cov_names):
        v.append("covariate names are not unique")
    overlap = set(names) & set(cov_names)
    if overlap:
        v.append(f"names used as both component and covariate: {sorted(overlap)}")
    if config.num_stages < 1:
        v.append(f"num_stages must be >= 1 (got {config.num_stages})")
    if config.icc is not None and not (0.0 <= config.icc < 1.0):
        v.append(f"icc must be in [0, 1) (got {config.icc})")
    return ValidationReport(v)


def expected_columns(config: TrialConfig) -> list[str]:
    """The observation CSV header for this config, in canonical order."""
    cols = ["stage", "cluster_id", "period"]
    cols += [f"dose_{c.name}" for c in config.components]
    cols += [f"cov_{c.name}" for c in config.covariates]
    cols += ["events", "trials"]
    return cols


def _as_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def load_observations(source, config: TrialConfig) -> list[StageDataset]:
    """Parse an observation CSV into one StageDataset per distinct stage.

    `source` may be CSV text, UTF-8 bytes, or a file-like object. Raises
    DataError naming the offending row and column on any malformed content.
    """
    text = _as_text(source)
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DataError("observation CSV is empty")
    header = [h.strip() for h in rows[0]]
    expected = expected_columns(config)
    unknown = [h for h in header if h not in expected]
    if unknown:
        raise DataError(f"unknown column {unknown[0]!r} (expected {expected})")
    missing = [h for h in expected if h not in header]
    if missing:
        raise DataError(f"missing column {missing[0]!r}")
    idx = {h: i for i, h in enumerate(header)}

    def _num(row, row_no, col):
        raw = row[idx[col]].strip()
        try:
            return float(raw)
        except ValueError:
            raise DataError(f"row {row_no}: column {col!r}: non-numeric value {raw!r}") from None

    def _int(row, row_no, col):
        raw = row[idx[col]].strip()
        try:
            return int(raw)
        except ValueError:
            raise DataError(f"row {row_no}: column {col!r}: non-integer value {raw!r}") from None

    records: list[ObservationRecord] = []
    for row_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"row {row_no}: has {len(row)} fields, header has {len(header)}")
        stage = _int(row, row_no, "stage")
        if not (1 <= stage <= config.num_stages):
            raise DataError(
                f"row {row_no}: column 'stage': {stage} outside [1, {config.num_stages}]"
            )
        period = row[idx["period"]].strip()
        if period not in PERIODS:
            raise DataError(
                f"row {row_no}: column 'period': {period!r} not one of {list(PERIODS)}"
            )
        doses = tuple(_num(row, row_no, f"dose_{c.name}") for c in config.components)
        if any(not math.isfinite(d) for d in doses):
            raise DataError(f"row {row_no}: doses must be finite")
        if period in ("control", "baseline") and any(d != 0.0 for d in doses):
            raise DataError(f"row {row_no}: {period} rows must carry all-zero doses")
        covs = tuple(_num(row, row_no, f"cov_{c.name}") for c in config.covariates)
        events = _int(row, row_no, "events")
        trials = _int(row, row_no, "trials")
        if trials < 1:
            raise DataError(f"row {row_no}: column 'trials': must be >= 1 (got {trials})")
        if events < 0:
            raise DataError(f"row {row_no}: column 'events': must be >= 0 (got {events})")
        if events > trials:
            raise DataError(f"row {row_no}: events {events} > trials {trials}")
        records.append(
            ObservationRecord(
                stage=stage,
                cluster_id=row[idx["cluster_id"]].strip(),
                period=period,
                doses=doses,
                covariates=covs,
                events=events,
                trials=trials,
            )
        )

    stages = sorted({r.stage for r in records})
    return [
        StageDataset(stage_index=s, records=tuple(r for r in records if r.stage == s))
        for s in stages
    ]


def write_observations(datasets: Sequence[StageDataset], config: TrialConfig) -> str:
    """Serialize stage datasets back to the canonical observation CSV."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(expected_columns(config))
    for ds in sorted(datasets, key=lambda d: d.stage_index):
        for r in ds.records:
            writer.writerow(
                [r.stage, r.cluster_id, r.period]
                + [repr(d) for d in r.doses]
                + [repr(z) for z in r.covariates]
                + [r.events, r.trials]
            )
    return out.getvalue()


def combine_stages(datasets: Iterable[StageDataset], upto: int) -> CombinedDataset:
    """Concatenate records of stages 1..upto, preserving stage order."""
    by_stage = {}
    for ds in datasets:
        if ds.stage_index in by_stage:
            raise DataError(f"duplicate dataset for stage {ds.stage_index}")
        by_stage[ds.stage_index] = ds
    if upto < 1:
        raise DataError(f"upto must be >= 1 (got {upto})")
    missing = [s for s in range(1, upto + 1) if s not in by_stage]
    if missing:
        raise DataError(f"no data for stage {missing[0]} (upto={upto})")
    records: list[ObservationRecord] = []
    for s in range(1, upto + 1):
        records.extend(by_stage[s].records)
    return CombinedDataset(records=tuple(records), upto=upto)
