"""CSV ingestion, model files, run configuration and dictionary recipes.

Model file layout (JSON, ``"format": "jupad-model"``, ``"version": 1``)::

    {
      "format": "jupad-model", "version": 1, "N": 3, "F": 2,
      "weights": [...],                       # length F
      "label": "class" | null,
      "dimensions": [
        {"name": "x0", "kind": "continuous" | "discrete",
         "grid": [edges...] | null,
         "dictionary": {"atoms": [{"family": "gaussian", "mean": 0.0, "variance": 1.0}, ...],
                        "range": [a, b]} | {"atoms": [...], "num_states": C},
         "weights": {"shape": [L, F], "data": [row-major entries]},
         "states": [original labels] | null,
         "transform": [min, max] | null},
        ...
      ],
      "provenance": {"seed": 0, "config_hash": "...", ...}
    }

Floats are written with Python's shortest round-trip representation, so a
load reproduces every number bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .atoms import (PRESETS, Dictionary, Grid, build_dictionary_grid_preset, identity_dictionary,
                    preset_dictionary)
from .errors import ConfigError, CorruptModelError, DataError, DomainError, ParseError
from .histogram import Dataset
from .model import JointModel
from .solver import FitConfig, TraceRecord

FORMAT = "jupad-model"
VERSION = 1
LOAD_TOL = 1e-6


# -- CSV ----------------------------------------------------------------------


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return v


def _state_sort_key(values):
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


def load_csv(path, columns: Mapping | None = None, label: str | None = None, normalize=False,
             state_labels: Mapping | None = None, transforms: Mapping | None = None) -> Dataset:
    """Read a headed CSV into a :class:`Dataset`.

    ``columns`` maps a column name to ``"continuous"``, ``"discrete"``,
    ``"ignore"`` or ``{"discrete": [state labels...]}``; unlisted columns are
    continuous. Discrete values become 0-based state indices. ``normalize``
    (``True`` or a list of names) min-max scales continuous columns to
    ``[0, 1]``. Previously stored ``state_labels``/``transforms`` take
    precedence so test data is encoded exactly like training data.
    """
    columns = dict(columns or {})
    state_labels = dict(state_labels or {})
    transforms = dict(transforms or {})
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    unknown = set(columns) - set(header)
    if unknown:
        raise ConfigError(f"{path}: columns {sorted(unknown)} not in header {header}")
    keep = [i for i, h in enumerate(header) if columns.get(h) != "ignore"]
    names = [header[i] for i in keep]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    raw = []
    for r_no, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise ParseError(f"{path}: row {r_no} has {len(r)} cells, header has {len(header)}")
        raw.append([r[i].strip() for i in keep])
    values = np.empty((len(raw), len(names)))
    num_states = []
    for c, name in enumerate(names):
        spec = columns.get(name, "continuous")
        discrete = name in state_labels or spec == "discrete" or (isinstance(spec, Mapping) and "discrete" in spec)
        cells = [row[c] for row in raw]
        if discrete:
            if name in state_labels:
                states = [str(s) for s in state_labels[name]]
            elif isinstance(spec, Mapping):
                states = [str(s) for s in spec["discrete"]]
            else:
                states = _state_sort_key(set(cells))
            index = {s: i for i, s in enumerate(states)}
            for r_no, cell in enumerate(cells, start=2):
                if cell not in index:
                    raise DomainError(f"{path}: row {r_no}, column {name!r}: value {cell!r} is not a declared state")
                values[r_no - 2, c] = index[cell]
            state_labels[name] = states
            num_states.append(len(states))
        else:
            if spec not in ("continuous", None):
                raise ConfigError(f"column {name!r}: unknown column kind {spec!r}")
            values[:, c] = [_parse_float(cell, r_no, name) for r_no, cell in enumerate(cells, start=2)]
            num_states.append(None)
            wanted = normalize is True or (isinstance(normalize, (list, tuple)) and name in normalize)
            if name in transforms or wanted:
                lo, hi = transforms.get(name) or (float(values[:, c].min()), float(values[:, c].max()))
                if not hi > lo:
                    raise DataError(f"column {name!r} is constant and cannot be normalized")
                transforms[name] = [lo, hi]
                values[:, c] = (values[:, c] - lo) / (hi - lo)
    label_idx = None
    if label is not None:
        if label not in names:
            raise ConfigError(f"label column {label!r} not among columns {names}")
        label_idx = names.index(label)
    return Dataset(values, names, num_states, label_idx,
                   {k: v for k, v in state_labels.items() if k in names},
                   {k: v for k, v in transforms.items() if k in names})


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def dataset_rows(dataset: Dataset, values: np.ndarray | None = None):
    """Rows of ``values`` (default: the dataset's) in original units and labels."""
    values = dataset.values if values is None else values
    for row in values:
        out = []
        for n, name in enumerate(dataset.names):
            v = row[n]
            if dataset.num_states[n] is not None and name in dataset.state_labels:
                out.append(dataset.state_labels[name][int(v)])
            elif name in dataset.transforms:
                lo, hi = dataset.transforms[name]
                out.append(lo + v * (hi - lo))
            else:
                out.append(float(v))
        yield out


def write_dataset(path, dataset: Dataset, values: np.ndarray | None = None) -> None:
    write_csv(path, dataset.names, dataset_rows(dataset, values))


def write_trace(path, trace: Sequence[TraceRecord]) -> None:
    write_csv(path, TraceRecord._fields, trace)


# -- model files --------------------------------------------------------------


def model_to_dict(model: JointModel) -> dict:
    meta = model.metadata
    names = meta.get("names") or [f"x{n}" for n in range(model.ndim)]
    dims = []
    for n, (d, B) in enumerate(zip(model.dictionaries, model.factors)):
        name = names[n]
        dims.append({
            "name": name,
            "kind": "discrete" if d.discrete else "continuous",
            "grid": None if model.grids is None else [float(e) for e in model.grids[n].edges],
            "dictionary": d.to_dict(),
            "weights": {"shape": list(B.shape), "data": [float(v) for v in B.ravel()]},
            "states": meta.get("state_labels", {}).get(name),
            "transform": meta.get("transforms", {}).get(name),
        })
    label = meta.get("label")
    return {
        "format": FORMAT,
        "version": VERSION,
        "N": model.ndim,
        "F": model.rank,
        "weights": [float(v) for v in model.weights],
        "label": None if label is None else names[label],
        "dimensions": dims,
        "provenance": meta.get("provenance", {}),
    }


def model_from_dict(doc: Mapping) -> JointModel:
    if not isinstance(doc, Mapping) or doc.get("format") != FORMAT:
        raise CorruptModelError("not a model file")
    if doc.get("version") != VERSION:
        raise CorruptModelError(f"model file version {doc.get('version')!r}, expected {VERSION}")
    try:
        dicts, factors, grids, names = [], [], [], []
        states, transforms = {}, {}
        for dim in doc["dimensions"]:
            d = Dictionary.from_dict(dim["dictionary"])
            shape = tuple(dim["weights"]["shape"])
            B = np.asarray(dim["weights"]["data"], dtype=float).reshape(shape)
            dicts.append(d)
            factors.append(B)
            names.append(dim["name"])
            grids.append(None if dim["grid"] is None else Grid(dim["grid"], discrete=d.discrete))
            if dim.get("states") is not None:
                states[dim["name"]] = list(dim["states"])
            if dim.get("transform") is not None:
                transforms[dim["name"]] = list(dim["transform"])
        if len(dicts) != doc["N"] or len(doc["weights"]) != doc["F"]:
            raise CorruptModelError("declared N or F does not match the stored arrays")
        label = doc.get("label")
        meta = {"names": names, "state_labels": states, "transforms": transforms,
                "label": None if label is None else names.index(label),
                "provenance": doc.get("provenance", {})}
        return JointModel(dicts, factors, doc["weights"], None if any(g is None for g in grids) else grids,
                          tol=LOAD_TOL, metadata=meta)
    except CorruptModelError:
        raise
    except (DataError, KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"invalid model file: {exc}") from None


def save_model(model: JointModel, path) -> None:
    text = json.dumps(model_to_dict(model), indent=1, allow_nan=False)
    Path(path).write_text(text + "\n")


def load_model(path) -> JointModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorruptModelError(f"{path}: unreadable model file ({exc.msg} at line {exc.lineno})") from None
    return model_from_dict(doc)


# -- configuration ------------------------------------------------------------


def _check_keys(section: Mapping, allowed, where: str) -> None:
    if not isinstance(section, Mapping):
        raise ConfigError(f"{where} must be a mapping")
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def fit_config_from(section: Mapping | None) -> FitConfig:
    section = dict(section or {})
    _check_keys(section, [f.name for f in fields(FitConfig)], "fit")
    try:
        return FitConfig(**section).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_hash(doc) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class RunConfig:
    """A fully specified fitting run, read from one YAML document."""

    data_path: Path
    columns: dict = field(default_factory=dict)
    label: str | None = None
    normalize: object = False
    dictionaries: dict = field(default_factory=dict)
    fit: FitConfig = field(default_factory=FitConfig)
    model_path: Path | None = None
    trace_path: Path | None = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        return cls.from_dict(doc or {}, base=path.parent)

    @classmethod
    def from_dict(cls, doc: Mapping, base=Path(".")) -> "RunConfig":
        _check_keys(doc, ["data", "dictionaries", "fit", "output"], "config")
        data = doc.get("data") or {}
        _check_keys(data, ["path", "columns", "label", "normalize"], "data")
        if "path" not in data:
            raise ConfigError("data.path is required")
        out = doc.get("output") or {}
        _check_keys(out, ["model", "trace"], "output")
        dicts = doc.get("dictionaries") or {}
        if not isinstance(dicts, Mapping):
            raise ConfigError("dictionaries must be a mapping")
        for name, recipe in dicts.items():
            _check_recipe(recipe, f"dictionaries.{name}")
        resolve = lambda p: None if p is None else (Path(base) / p)
        return cls(resolve(data["path"]), dict(data.get("columns") or {}), data.get("label"),
                   data.get("normalize", False), dict(dicts), fit_config_from(doc.get("fit")),
                   resolve(out.get("model")), resolve(out.get("trace")), dict(doc))

    def load_dataset(self) -> Dataset:
        return load_csv(self.data_path, self.columns, self.label, self.normalize)


_RECIPE_KEYS = ("preset", "range", "spacing", "num_means", "families", "uniforms")


def _check_recipe(recipe, where: str) -> None:
    if isinstance(recipe, str):
        if recipe != "identity" and recipe not in PRESETS:
            raise ConfigError(f"{where}: unknown recipe {recipe!r}")
        return
    _check_keys(recipe, _RECIPE_KEYS, where)
    preset = recipe.get("preset", "grid")
    if preset not in ("grid", "identity", *PRESETS):
        raise ConfigError(f"{where}: unknown preset {preset!r}")


def dictionary_from_recipe(recipe, dataset: Dataset, n: int) -> Dictionary:
    """Build the dictionary for column ``n``.

    A recipe is ``"identity"``, a preset name (``"seeds"``, ``"wifi"``,
    ``"kth"``), or a mapping with ``preset: grid`` plus ``range`` (default:
    the column's observed range), ``spacing`` or ``num_means``, ``families``
    and ``uniforms``.
    """
    if dataset.is_discrete(n):
        if recipe not in (None, "identity") and not (isinstance(recipe, Mapping) and recipe.get("preset") == "identity"):
            raise ConfigError(f"discrete column {dataset.names[n]!r} only supports the identity dictionary")
        return identity_dictionary(dataset.num_states[n])
    if recipe is None:
        raise ConfigError(f"no dictionary recipe for continuous column {dataset.names[n]!r}")
    if isinstance(recipe, str):
        if recipe == "identity":
            raise ConfigError(f"identity dictionary needs a discrete column, {dataset.names[n]!r} is continuous")
        return preset_dictionary(recipe)
    preset = recipe.get("preset", "grid")
    if preset in PRESETS:
        return preset_dictionary(preset, **{k: v for k, v in recipe.items() if k != "preset"})
    col = dataset.values[:, n]
    a, b = recipe.get("range") or (float(col.min()), float(col.max()))
    if "spacing" in recipe:
        spacing = float(recipe["spacing"])
    elif "num_means" in recipe:
        if int(recipe["num_means"]) < 2:
            raise ConfigError("num_means must be at least 2")
        spacing = (b - a) / (int(recipe["num_means"]) - 1)
    else:
        raise ConfigError(f"grid recipe for {dataset.names[n]!r} needs spacing or num_means")
    families = recipe.get("families") or {"gaussian": {}}
    return build_dictionary_grid_preset((a, b), spacing, families, recipe.get("uniforms", 0))


def build_dictionaries(dataset: Dataset, recipes: Mapping) -> list:
    """One dictionary per column, using ``recipes[name]`` or ``recipes["default"]``."""
    out = []
    for n, name in enumerate(dataset.names):
        recipe = recipes.get(name, None if dataset.is_discrete(n) else recipes.get("default"))
        out.append(dictionary_from_recipe(recipe, dataset, n))
    return out
