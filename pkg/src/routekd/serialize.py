"""Versioned JSON checkpoints for models.

Float64 values are stored as hex-float strings (`float.hex`) so a
save/load round trip is bit-exact and the files are byte-deterministic.
"""

import json

import numpy as np

from routekd import gmm as gmm_mod
from routekd import nn
from routekd.errors import ValidationError

MLP_FORMAT = "routekd-mlp"
GMM_FORMAT = "routekd-gmm"
VERSION = 1


def _encode_array(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "hex": [float.hex(float(v)) for v in arr.ravel()]}


def _decode_array(obj):
    data = np.array([float.fromhex(s) for s in obj["hex"]], dtype=np.float64)
    return data.reshape(obj["shape"])


def _check_header(doc, expected_format):
    if doc.get("format") != expected_format:
        raise ValidationError(f"not a {expected_format} document: {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise ValidationError(f"unsupported checkpoint version {doc.get('version')!r}")


# ---------------------------------------------------------------------------
# MLP checkpoints


def mlp_to_json(model):
    layers = []
    for layer in model.layers:
        if layer.kind == "dense":
            layers.append(
                {
                    "kind": "dense",
                    "in_dim": layer.in_dim,
                    "units": layer.units,
                    "w": _encode_array(layer.w),
                    "b": _encode_array(layer.b),
                }
            )
        elif layer.kind == "dropout":
            layers.append({"kind": "dropout", "rate": layer.rate})
        elif layer.kind == "batchnorm":
            layers.append(
                {
                    "kind": "batchnorm",
                    "dim": layer.dim,
                    "eps": layer.eps,
                    "momentum": layer.momentum,
                    "gamma": _encode_array(layer.gamma),
                    "beta": _encode_array(layer.beta),
                    "running_mean": _encode_array(layer.running_mean),
                    "running_var": _encode_array(layer.running_var),
                }
            )
        else:
            layers.append({"kind": "relu"})
    return {
        "format": MLP_FORMAT,
        "version": VERSION,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "seed": model.seed,
        "mode": model.mode,
        "layers": layers,
    }


def mlp_from_json(doc):
    _check_header(doc, MLP_FORMAT)
    seed = doc.get("seed")
    layers = []
    for i, spec in enumerate(doc["layers"]):
        kind = spec["kind"]
        if kind == "dense":
            layer = nn.DenseLayer(spec["in_dim"], spec["units"])
            layer.w = _decode_array(spec["w"])
            layer.b = _decode_array(spec["b"])
        elif kind == "dropout":
            rng = np.random.default_rng(np.random.SeedSequence((seed or 0, 1000 + i)))
            layer = nn.DropoutLayer(spec["rate"], rng)
        elif kind == "batchnorm":
            layer = nn.BatchNormLayer(spec["dim"], eps=spec["eps"], momentum=spec["momentum"])
            layer.gamma = _decode_array(spec["gamma"])
            layer.beta = _decode_array(spec["beta"])
            layer.running_mean = _decode_array(spec["running_mean"])
            layer.running_var = _decode_array(spec["running_var"])
        elif kind == "relu":
            layer = nn.ReluLayer()
        else:
            raise ValidationError(f"unknown layer kind {kind!r} in checkpoint")
        layers.append(layer)
    model = nn.MlpModel(layers, doc["input_dim"], doc["output_dim"], seed=seed)
    model.set_mode(doc.get("mode", nn.EVAL))
    return model


def save_mlp(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mlp_to_json(model), fh, indent=1)
        fh.write("\n")


def load_mlp(path):
    with open(path, encoding="utf-8") as fh:
        return mlp_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# GMM checkpoints


def gmm_to_json(model):
    return {
        "format": GMM_FORMAT,
        "version": VERSION,
        "k": model.k,
        "d": model.d,
        "weights": _encode_array(model.weights),
        "means": _encode_array(model.means),
        "variances": _encode_array(model.variances),
    }


def gmm_from_json(doc):
    _check_header(doc, GMM_FORMAT)
    return gmm_mod.GmmModel(
        weights=_decode_array(doc["weights"]),
        means=_decode_array(doc["means"]),
        variances=_decode_array(doc["variances"]),
    )


def save_gmm(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(gmm_to_json(model), fh, indent=1)
        fh.write("\n")


def load_gmm(path):
    with open(path, encoding="utf-8") as fh:
        return gmm_from_json(json.load(fh))
