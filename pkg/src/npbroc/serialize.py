"""Versioned JSON serialization of fitted models.

The on-disk format carries a semantic version; loading rejects files
whose major version differs from the current writer.  Floats go through
``repr`` semantics of the ``json`` module, so a save/load round trip
reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from .bernstein import BernsteinBasis, MonotoneTransform
from .exceptions import DataError
from .joint import Dependence, NpbModel
from .links import get_link
from .margins import MarginalModel

__all__ = ["FORMAT_VERSION", "model_to_dict", "model_from_dict", "save_model", "load_model"]

FORMAT_VERSION = "1.0.0"


def _margin_to_dict(margin: MarginalModel) -> dict:
    basis = margin.transform.basis
    return {
        "link": margin.link.name,
        "basis": {
            "order": basis.order,
            "lower": basis.lower,
            "upper": basis.upper,
            "log_scale": basis.log_scale,
        },
        "coefficients": margin.transform.coefficients.tolist(),
        "beta": margin.beta.tolist(),
        "covariate_names": list(margin.covariate_names),
    }


def _margin_from_dict(d: dict) -> MarginalModel:
    basis = BernsteinBasis(
        order=int(d["basis"]["order"]),
        lower=float(d["basis"]["lower"]),
        upper=float(d["basis"]["upper"]),
        log_scale=bool(d["basis"]["log_scale"]),
    )
    return MarginalModel(
        link=get_link(d["link"]),
        transform=MonotoneTransform(basis, np.asarray(d["coefficients"], dtype=float)),
        beta=np.asarray(d["beta"], dtype=float),
        covariate_names=tuple(d["covariate_names"]),
    )


def model_to_dict(model: NpbModel, metadata: dict | None = None) -> dict:
    dep = model.dependence
    out = {
        "format_version": FORMAT_VERSION,
        "margin_y": _margin_to_dict(model.margin_y),
        "margin_t": _margin_to_dict(model.margin_t),
        "dependence": {
            "form": dep.form,
            "lambda": dep.lambda_,
            "alpha": dep.alpha,
            "gamma": dep.gamma.tolist(),
        },
    }
    if metadata:
        out["metadata"] = metadata
    return out


def model_from_dict(d: dict) -> NpbModel:
    version = d.get("format_version")
    if not isinstance(version, str):
        raise DataError("missing format_version in model document")
    major = version.split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise DataError(
            f"unsupported model format version {version!r} (this reader handles {FORMAT_VERSION})"
        )
    dep_d = d["dependence"]
    dependence = Dependence(
        form=dep_d["form"],
        lambda_=float(dep_d["lambda"]),
        alpha=float(dep_d["alpha"]),
        gamma=np.asarray(dep_d["gamma"], dtype=float),
    )
    return NpbModel(
        margin_y=_margin_from_dict(d["margin_y"]),
        margin_t=_margin_from_dict(d["margin_t"]),
        dependence=dependence,
    )


def save_model(model: NpbModel, path, metadata: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, metadata), fh, indent=2)
        fh.write("\n")


def load_model(path) -> NpbModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid model file: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError("model file must contain a JSON object")
    return model_from_dict(doc)
