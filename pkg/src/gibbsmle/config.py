"""Flat ``key = value`` text files for models and experiment specs."""

from __future__ import annotations

from pathlib import Path

from .models import GibbsModel, Kind


class ConfigError(ValueError):
    pass


def parse_keyvalue(text: str, source: str = "<string>") -> dict[str, str]:
    """Lines of ``key = value``; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_keyvalue(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return parse_keyvalue(text, str(path))


def floats(value: str) -> list[float]:
    try:
        return [float(v) for v in value.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"not a number list: {value!r}") from None


def number(value: str, key: str = "") -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key or 'value'}: not a number: {value!r}") from None


MODEL_KEYS = {"kind", "z", "beta", "R", "delta", "A", "B", "n", "m", "truncation"}


def model_from_keys(kv: dict[str, str]) -> GibbsModel:
    """Build a model from ``kind`` plus its parameters.

    Piecewise models take comma lists for ``beta`` and ``R`` (the breakpoints).
    """
    if "kind" not in kv:
        raise ConfigError("model needs a 'kind' key")
    try:
        kind = Kind(kv["kind"].strip().lower().replace("-", "_"))
    except ValueError:
        names = ", ".join(k.value for k in Kind)
        raise ConfigError(f"unknown kind {kv['kind']!r} (one of {names})") from None

    def get(key, default=None):
        if key not in kv:
            if default is None:
                raise ConfigError(f"{kind.value} model needs {key!r}")
            return default
        return number(kv[key], key)

    z = get("z")
    delta = get("delta", 0.0)
    if kind is Kind.POISSON:
        return GibbsModel.poisson(z)
    if kind is Kind.LENNARD_JONES:
        trunc = get("truncation", -1.0)
        return GibbsModel.lennard_jones(z, get("A", 1.0), get("B", 1.0), get("n", 12.0),
                                        get("m", 6.0), None if trunc < 0 else trunc)
    if kind is Kind.PIECEWISE:
        if "beta" not in kv or "R" not in kv:
            raise ConfigError("piecewise model needs 'beta' and 'R' lists")
        return GibbsModel.piecewise(z, floats(kv["beta"]), floats(kv["R"]), delta)
    beta, R = get("beta"), get("R")
    if kind is Kind.STRAUSS:
        return GibbsModel.strauss(z, beta, R, delta)
    if kind is Kind.HARDCORE_STRAUSS:
        return GibbsModel.hardcore_strauss(z, beta, R, delta)
    return GibbsModel.area_interaction(z, beta, R, delta)


def model_to_keys(model: GibbsModel) -> dict[str, str]:
    p = model.params
    out = {"kind": model.kind.value, "z": repr(p.z)}
    if model.kind is Kind.POISSON:
        return out
    if model.kind is Kind.LENNARD_JONES:
        out.update({k: repr(v) for k, v in zip("ABnm", p.lj)})
        if model.truncation is not None:
            out["truncation"] = repr(model.truncation)
        return out
    out["delta"] = repr(p.delta)
    out["beta"] = ",".join(repr(b) for b in p.beta)
    out["R"] = ",".join(repr(r) for r in p.ranges)
    return out


def format_keyvalue(kv: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in kv.items())


def parse_box(text: str) -> dict[str, tuple[float, float]]:
    """``z=-1:1,beta=0:3`` -> {"z": (-1, 1), "beta": (0, 3)}."""
    box = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item or ":" not in item:
            raise ConfigError(f"box entry {item!r} is not param=lo:hi")
        name, rng = item.split("=", 1)
        lo, hi = rng.split(":", 1)
        lo, hi = number(lo, name), number(hi, name)
        if not lo <= hi:
            raise ConfigError(f"box for {name}: empty interval {lo}:{hi}")
        box[name.strip()] = (lo, hi)
    return box
