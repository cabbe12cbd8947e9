"""Text serialization for trained models.

One self-describing, binary-free format for all model kinds: a header
with the kind and hyperparameters, then parameter blocks in decimal with
17 significant digits (enough to round-trip float64 exactly).  The same
canonical text feeds the parameter hash, so two models hash equal iff
their serialized parameters are identical.
"""

import enum
import hashlib
import io
import json

import numpy as np

from ..errors import ParameterError
from .baseline import MeanBaseline
from .ridge import RidgeRegressor
from .transformer import CausalWindowTransformer

_MAGIC = "longpanel-model 1"


def _jsonable(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _format_row(values):
    return " ".join(f"{float(v):.17g}" for v in values)


def _write_param(out, name, array):
    array = np.asarray(array, dtype=np.float64)
    dims = " ".join(str(d) for d in array.shape)
    out.write(f"param {name} {dims}".rstrip() + "\n")
    if array.ndim == 0:
        out.write(_format_row([array]) + "\n")
    elif array.ndim == 1:
        out.write(_format_row(array) + "\n")
    elif array.ndim == 2:
        for row in array:
            out.write(_format_row(row) + "\n")
    else:
        raise ParameterError(f"cannot serialize {array.ndim}-d parameter {name}")


def _model_parts(model):
    """(kind, hyper dict, fitted dict, ordered param items) for a model."""
    hyper = {k: _jsonable(v) for k, v in model.get_params().items()}
    if isinstance(model, MeanBaseline):
        return "mean", hyper, {}, [("mean", model.mean_)]
    if isinstance(model, RidgeRegressor):
        return (
            "ridge",
            hyper,
            {},
            [("coef", model.coef_), ("intercept", model.intercept_)],
        )
    if isinstance(model, CausalWindowTransformer):
        fitted = {"d_in": model.d_in_}
        items = [(name, model.params_[name]) for name in sorted(model.params_)]
        return "transformer", hyper, fitted, items
    raise ParameterError(f"cannot serialize model of type {type(model).__name__}")


def serialize_model(model):
    """Render a fitted model to its canonical text form."""
    kind, hyper, fitted, items = _model_parts(model)
    out = io.StringIO()
    out.write(_MAGIC + "\n")
    out.write(f"kind {kind}\n")
    out.write("hyper " + json.dumps(hyper, sort_keys=True) + "\n")
    out.write("fitted " + json.dumps(fitted, sort_keys=True) + "\n")
    for name, array in items:
        _write_param(out, name, array)
    out.write("end\n")
    return out.getvalue()


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(model))


def param_hash(model):
    """SHA-256 of the canonical serialization; equal iff parameters equal."""
    return hashlib.sha256(serialize_model(model).encode("utf-8")).hexdigest()


def _parse_params(lines, i):
    params = {}
    while i < len(lines):
        line = lines[i].rstrip("\n")
        if line == "end":
            return params, i + 1
        if not line.startswith("param "):
            raise ParameterError(f"unexpected model line: {line!r}")
        fields = line.split()
        name = fields[1]
        shape = tuple(int(d) for d in fields[2:])
        n_rows = shape[0] if len(shape) == 2 else 1
        rows = []
        for r in range(n_rows):
            rows.append(
                np.array(
                    [float(v) for v in lines[i + 1 + r].split()],
                    dtype=np.float64,
                )
            )
        array = np.stack(rows) if len(shape) == 2 else rows[0]
        if len(shape) == 0:
            array = np.asarray(float(array[0]))
        params[name] = array.reshape(shape)
        i += 1 + n_rows
    raise ParameterError("model file ended without 'end' marker")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines or lines[0].rstrip("\n") != _MAGIC:
        raise ParameterError("not a longpanel model file")
    if not lines[1].startswith("kind "):
        raise ParameterError("missing model kind")
    kind = lines[1].split(None, 1)[1].strip()
    hyper = json.loads(lines[2].split(None, 1)[1])
    fitted = json.loads(lines[3].split(None, 1)[1])
    params, _ = _parse_params(lines, 4)

    if kind == "mean":
        model = MeanBaseline(**hyper)
        model.mean_ = float(params["mean"])
        return model
    if kind == "ridge":
        model = RidgeRegressor(**hyper)
        model.coef_ = params["coef"]
        model.coef_.flags.writeable = False
        model.intercept_ = float(params["intercept"])
        return model
    if kind == "transformer":
        model = CausalWindowTransformer(**hyper)
        model.d_in_ = int(fitted["d_in"])
        for p in params.values():
            p.flags.writeable = False
        model.params_ = params
        return model
    raise ParameterError(f"unknown model kind {kind!r}")
