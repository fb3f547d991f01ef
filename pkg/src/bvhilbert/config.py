"""Run configurations: JSON schemas per subcommand and object builders."""
import json

import jsonschema
import numpy as np

from . import calculus
from .calculus import SmoothedIndicator, SpectralSpace
from .exceptions import ArgumentError, ConfigError
from .measures import GaussianMeasure, ProductMeasure, WeightedGaussianMeasure
from .perimeter import Halfspace, SublevelSet, lp_ball_functional
from .potentials import (ScalarNonlinearity, constant_potential, moreau_yosida, quadratic_potential,
                         reaction_diffusion_potential, separable_polynomial_potential)
from .semigroups import SemigroupSpec
from .variation import AscentConfig, BvCandidate

SCHEMA_VERSION = 1

_num = {"type": "number"}
_int_pos = {"type": "integer", "minimum": 1}
_vec = {"type": "array", "items": _num, "minItems": 1}
_idx = {"type": "array", "items": {"type": "integer", "minimum": 0}}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_SPACE = _obj({
    "dim": _int_pos,
    "eigenvalues": {"oneOf": [_vec, {"type": "string", "pattern":
                                     r"^(dirichlet_half_inverse|paper_lambda|geometric\([0-9.eE+-]+\))$"}]},
    "basis": {"enum": ["sine", None]},
}, ["eigenvalues"])

_FUNCTION = {"oneOf": [
    _obj({"kind": {"const": "constant"}, "value": _num}, ["kind", "value"]),
    _obj({"kind": {"const": "affine"}, "coef": _vec, "offset": _num, "indices": _idx}, ["kind", "coef"]),
    _obj({"kind": {"const": "tanh_affine"}, "coef": _vec, "offset": _num, "scale": _num, "indices": _idx},
         ["kind", "coef"]),
    _obj({"kind": {"const": "radial_bump"}, "center": _vec, "width": {"type": "number", "exclusiveMinimum": 0},
          "amplitude": _num, "indices": _idx}, ["kind", "center"]),
    _obj({"kind": {"const": "quadratic"}, "matrix": {"type": "array", "items": _vec}, "coef": _vec,
          "offset": _num, "indices": _idx}, ["kind", "matrix"]),
]}

_POTENTIAL = {"oneOf": [
    _obj({"kind": {"const": "constant"}, "value": _num, "moreau_alpha": _num}, ["kind"]),
    _obj({"kind": {"const": "quadratic"}, "kappa": {"type": "number", "minimum": 0}, "diag": _vec,
          "moreau_alpha": _num}, ["kind", "kappa"]),
    _obj({"kind": {"const": "custom_polynomial"}, "coeffs": _vec, "moreau_alpha": _num}, ["kind", "coeffs"]),
    _obj({"kind": {"const": "reaction_diffusion"}, "f_coeffs": _vec,
          "quad_points": {"type": "integer", "minimum": 64}, "moreau_alpha": _num}, ["kind", "f_coeffs"]),
]}

_MEASURE = {"oneOf": [
    _obj({"kind": {"const": "gaussian"}}, ["kind"]),
    _obj({"kind": {"const": "weighted_gaussian"}, "potential": _POTENTIAL,
          "mode": {"enum": ["importance", "chain"]}, "dt": {"type": "number", "exclusiveMinimum": 0},
          "burn_in": {"type": "number", "minimum": 0}}, ["kind", "potential"]),
    _obj({"kind": {"const": "product"}, "m": {"type": "number", "minimum": 1}, "mus": _vec,
          "mu_power": {"type": "number", "exclusiveMinimum": 0}, "dim": _int_pos,
          "basis": {"enum": ["sine", None]}}, ["kind", "m"]),
]}

_G_FUNCTIONAL = {"oneOf": [
    _FUNCTION,
    _obj({"kind": {"const": "norm_squared"}}, ["kind"]),
    _obj({"kind": {"const": "lp_ball"}, "p": {"type": "number", "exclusiveMinimum": 2},
          "quad_points": {"type": "integer", "minimum": 64}}, ["kind", "p"]),
]}

_CANDIDATE = {"oneOf": [
    _obj({"kind": {"const": "cyl"}, "function": _FUNCTION, "scale": _num}, ["kind", "function"]),
    _obj({"kind": {"const": "halfspace"}, "a": _vec, "r": _num, "scale": _num}, ["kind", "a", "r"]),
    _obj({"kind": {"const": "indicator"}, "g": _G_FUNCTIONAL, "r": _num, "scale": _num}, ["kind", "g", "r"]),
    _obj({"kind": {"const": "smoothed"}, "g": _G_FUNCTIONAL, "r": _num,
          "eps": {"type": "number", "exclusiveMinimum": 0}, "scale": _num}, ["kind", "g", "r", "eps"]),
]}

_SEMIGROUP = _obj({
    "kind": {"enum": ["classical_mehler", "drifted_ou", "dirichlet_em"]},
    "dt": {"type": "number", "exclusiveMinimum": 0},
    "burn_in": {"type": "number", "minimum": 0},
    "paths": {"type": "integer", "minimum": 2},
    "t_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 4},
}, ["kind"])

_ASCENT = _obj({"steps": _int_pos, "restarts": _int_pos, "lr": {"type": "number", "exclusiveMinimum": 0},
                "batch": {"type": "integer", "minimum": 2}, "select_samples": {"type": "integer", "minimum": 2},
                "directions": {"enum": ["basis", "rotated"]}})

_POINTS = {"type": "array", "items": _vec, "minItems": 1}

_COMMON = {"schema_version": {"const": SCHEMA_VERSION}, "space": _SPACE, "measure": _MEASURE,
           "description": {"type": "string"}}

SCHEMAS = {
    "sample": _obj({**_COMMON, "count": _int_pos, "emit_points": {"type": "boolean"}},
                   ["schema_version", "measure", "count"]),
    "moments": _obj({**_COMMON, "orders": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                           "minItems": 1}},
                    ["schema_version", "measure"]),
    "ibp-check": _obj({**_COMMON, "pairs": _int_pos, "n_sigma": {"type": "number", "exclusiveMinimum": 0}},
                      ["schema_version", "measure"]),
    "variation": _obj({**_COMMON, "u": _CANDIDATE, "method": {"enum": ["direct", "sup", "semigroup"]},
                       "which": {"enum": ["M", "nabla", "Vz", "V", "V0"]}, "z": _vec,
                       "ascent": _ASCENT, "semigroup": _SEMIGROUP},
                      ["schema_version", "measure", "u", "method"]),
    "perimeter": _obj({**_COMMON, "set": {"oneOf": [
        _obj({"kind": {"const": "halfspace"}, "a": _vec, "r": _num, "which": {"enum": ["p", "p0"]}},
             ["kind", "a", "r"]),
        _obj({"kind": {"const": "sublevel"}, "g": _G_FUNCTIONAL, "r": _num,
              "eps_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2}},
             ["kind", "g", "r"]),
    ]}}, ["schema_version", "measure", "set"]),
    "semigroup": _obj({**_COMMON, "semigroup": _SEMIGROUP, "f": _FUNCTION,
                       "t": {"type": "number", "minimum": 0}, "points": _POINTS,
                       "engine": {"enum": ["gh", "mc", "auto"]}},
                      ["schema_version", "measure", "semigroup", "f", "t", "points"]),
    "commutation": _obj({**_COMMON, "semigroup": _SEMIGROUP, "f": _FUNCTION, "k": {"type": "integer", "minimum": 0},
                         "t": {"type": "number", "exclusiveMinimum": 0}, "points": _POINTS,
                         "engine": {"enum": ["em", "gh"]}, "nodes": _int_pos},
                        ["schema_version", "measure", "f", "k", "t", "points"]),
}


def load_config(path, command):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(cfg, command)
    return cfg


def validate_config(cfg, command):
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    if cfg["measure"]["kind"] != "product" and "space" not in cfg:
        raise ConfigError("config needs a 'space' block for this measure")


# --------------------------------------------------------------------------
# builders


def build_space(spec):
    eig = spec["eigenvalues"]
    basis = spec.get("basis")
    if isinstance(eig, str):
        if "dim" not in spec:
            raise ConfigError("named eigenvalue rules need 'dim'")
        return SpectralSpace.from_rule(eig, spec["dim"], basis=basis)
    if "dim" in spec and spec["dim"] != len(eig):
        raise ConfigError("'dim' disagrees with the eigenvalue list")
    return SpectralSpace(eig, basis=basis)


def build_potential(spec, space):
    kind = spec["kind"]
    if kind == "constant":
        U = constant_potential(space.dim, spec.get("value", 0.0))
    elif kind == "quadratic":
        U = quadratic_potential(space.dim, spec["kappa"], spec.get("diag"))
    elif kind == "custom_polynomial":
        U = separable_polynomial_potential(space.dim, spec["coeffs"])
    else:
        nl = ScalarNonlinearity(spec["f_coeffs"])
        U = reaction_diffusion_potential(nl, space, spec.get("quad_points", 256))
    if "moreau_alpha" in spec:
        U = moreau_yosida(U, spec["moreau_alpha"])
    return U


def build_measure(cfg):
    spec = cfg["measure"]
    if spec["kind"] == "product":
        if "mus" in spec:
            mus = spec["mus"]
        elif "mu_power" in spec and "dim" in spec:
            mus = np.arange(1, spec["dim"] + 1, dtype=float) ** (-spec["mu_power"])
        else:
            raise ConfigError("product measure needs 'mus' or both 'mu_power' and 'dim'")
        return ProductMeasure(spec["m"], mus, basis=spec.get("basis"))
    space = build_space(cfg["space"])
    base = GaussianMeasure(space)
    if spec["kind"] == "gaussian":
        return base
    U = build_potential(spec["potential"], space)
    return WeightedGaussianMeasure(base, U, spec.get("mode", "importance"), spec.get("dt", 1e-3),
                                   spec.get("burn_in"))


def build_function(spec):
    kind = spec["kind"]
    if kind == "constant":
        return calculus.constant(spec["value"])
    if kind == "affine":
        return calculus.affine(spec["coef"], spec.get("offset", 0.0), spec.get("indices"))
    if kind == "tanh_affine":
        return calculus.tanh_affine(spec["coef"], spec.get("offset", 0.0), spec.get("scale", 1.0),
                                    spec.get("indices"))
    if kind == "radial_bump":
        return calculus.radial_bump(spec["center"], spec.get("width", 1.0), spec.get("amplitude", 1.0),
                                    spec.get("indices"))
    return calculus.quadratic(spec["matrix"], spec.get("coef"), spec.get("offset", 0.0), spec.get("indices"))


def build_functional(spec, space):
    if spec["kind"] == "norm_squared":
        return calculus.quadratic(2.0 * np.eye(space.dim))
    if spec["kind"] == "lp_ball":
        return lp_ball_functional(spec["p"], space, spec.get("quad_points", 256))
    return build_function(spec)


def build_candidate(spec, space):
    kind = spec["kind"]
    if kind == "cyl":
        u = BvCandidate.from_cyl(build_function(spec["function"]))
    elif kind == "halfspace":
        a = np.zeros(space.dim)
        full = np.asarray(spec["a"], dtype=float)
        a[: min(space.dim, full.size)] = full[: space.dim]
        u = BvCandidate.halfspace(a, spec["r"])
    elif kind == "indicator":
        u = BvCandidate.indicator(build_functional(spec["g"], space), spec["r"])
    else:
        g = build_functional(spec["g"], space)
        u = BvCandidate.smoothed(SmoothedIndicator(g, spec["r"], spec["eps"]))
    return u.scaled(spec["scale"]) if "scale" in spec else u


def build_semigroup(spec, measure):
    return SemigroupSpec(spec["kind"], measure, spec.get("dt", 1e-3), spec.get("burn_in"),
                         spec.get("paths", 4096))


def build_ascent(spec):
    return AscentConfig(**(spec or {}))


def build_set(spec, space):
    if spec["kind"] == "halfspace":
        return Halfspace(tuple(spec["a"]), spec["r"])
    return SublevelSet(build_functional(spec["g"], space), spec["r"])


def guarded(builder, *args):
    """Run a builder, reporting argument errors as configuration errors."""
    try:
        return builder(*args)
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from exc
