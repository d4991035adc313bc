"""JSON encoding helpers: numpy arrays round-trip with complex support."""

from __future__ import annotations

import json

import numpy as np


def arr_to_json(a):
    """Encode an ndarray; complex entries become [re, im] pairs."""
    a = np.asarray(a)
    if np.iscomplexobj(a):
        flat = a.ravel()
        return {
            "shape": list(a.shape),
            "complex": True,
            "data": [[float(v.real), float(v.imag)] for v in flat],
        }
    return {
        "shape": list(a.shape),
        "complex": False,
        "data": [float(v) for v in a.ravel()],
    }


def arr_from_json(obj):
    shape = tuple(obj["shape"])
    if obj["complex"]:
        flat = np.array([complex(re, im) for re, im in obj["data"]])
        return flat.reshape(shape)
    return np.array(obj["data"], dtype=float).reshape(shape)


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
