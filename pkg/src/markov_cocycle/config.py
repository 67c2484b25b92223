"""Experiment configuration: sectioned ``key = value`` text.

Grammar (``#`` or ``;`` start comments; keys are case-insensitive)::

    [experiment]
    harness = theorem-a | lift | skew | met | fibered-report
    seed    = 0                  # every random choice derives from this
    out     = results            # output directory (relative to the working directory)
    seed_densities = 0           # extra random seed densities (theorem-a)

    [driving]
    kind     = cycle | bernoulli
    n        = 2                 # cycle length
    labels   = 0, 1              # optional label per cycle point
    alphabet = 2                 # bernoulli only
    probs    = 0.5, 0.5          # bernoulli only
    fibers   = 0, 1, 2           # fibers to test (default: all / 0..7)

    [cocycle]
    matrices   = table.csv       # generator table, or
    maps       = family.txt      # map-family file, with
    resolution = 6               # a single Ulam resolution, or
    ladder     = 64, 256, 1024   # a strictly increasing resolution ladder
    subsamples = 64
    norm       = absolute-sum    # met only
    f          = random          # met only: random, uniform, or 'v | v | ...' per fiber

    [tolerances]
    tol = 1e-9    skew = 1e-12    ui_level = 0.5    ui_delta = (1/first rung)
    eps = 0.01, 0.0001

    [horizons]
    n_max = (auto)   trace = 256   depth = 6   ladder = 131072   cylinders = 1000000

Input paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

HARNESSES = ("theorem-a", "lift", "skew", "met", "fibered-report")

_SCHEMA = {
    "experiment": {"harness", "seed", "out", "seed_densities"},
    "driving": {"kind", "n", "labels", "alphabet", "probs", "seed", "fibers"},
    "cocycle": {"matrices", "maps", "resolution", "ladder", "subsamples", "norm", "f"},
    "tolerances": {"tol", "skew", "ui_level", "ui_delta", "eps"},
    "horizons": {"n_max", "trace", "depth", "ladder", "cylinders"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "<config>", line: int = 0, column: int = 0):
        super().__init__(message)
        self.message, self.path, self.line, self.column = message, path, line, column

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.column}: error: {self.message}"


@dataclass
class ExperimentConfig:
    harness: str
    seed: int
    out: Path
    driving: dict
    matrices: Path | None = None
    maps: Path | None = None
    resolution: int | None = None
    ladder: list[int] = field(default_factory=list)
    subsamples: int = 64
    norm: str = "absolute-sum"
    f: str = "random"
    fibers: list[int] | None = None
    seed_densities: int = 0
    tol: float | None = None
    skew_tol: float = 1e-12
    ui_level: float = 0.5
    ui_delta: float | None = None
    eps: list[float] = field(default_factory=lambda: [1e-2, 1e-4])
    n_max: int | None = None
    trace: int = 256
    depth: int = 6
    ladder_horizon: int = 2**17
    cylinders: int = 10**6
    source: Path | None = None

    @property
    def default_tol(self) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-6 if self.maps is not None else 1e-9


class _Locator:
    """Line/column of ``key = value`` entries, for value-level diagnostics."""

    def __init__(self, text: str):
        self.pos: dict[tuple[str, str], tuple[int, int]] = {}
        self.sections: dict[str, int] = {}
        section = None
        for i, raw in enumerate(text.splitlines(), start=1):
            m = re.match(r"\s*\[([^\]]+)\]", raw)
            if m:
                section = m.group(1).strip().lower()
                self.sections.setdefault(section, i)
                continue
            m = re.match(r"(\s*)([^=:#;\s][^=:]*?)\s*[=:]\s*(.*)$", raw)
            if m and section is not None:
                key = m.group(2).strip().lower()
                self.pos[(section, key)] = (i, m.start(3) + 1)

    def at(self, section: str, key: str | None = None) -> tuple[int, int]:
        if key is not None and (section, key) in self.pos:
            return self.pos[(section, key)]
        return self.sections.get(section, 0), 1


def _split(value: str) -> list[str]:
    return [p.strip() for p in value.split(",") if p.strip()]


def parse_config(text: str, path: str | Path = "<config>", base: Path | None = None
                 ) -> ExperimentConfig:
    path = str(path)
    base = base or Path(".")
    loc = _Locator(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("entry before any [section] header", path, e.lineno, 1) from None
    except configparser.ParsingError as e:
        lineno, line = e.errors[0] if e.errors else (0, "")
        raise ConfigError(f"cannot parse line {line.strip()!r}", path, lineno, 1) from None
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"duplicate key {e.option!r} in [{e.section}]", path,
                          e.lineno or 0, 1) from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"duplicate section [{e.section}]", path, e.lineno or 0, 1) from None

    def err(msg, section, key=None):
        line, col = loc.at(section, key)
        return ConfigError(msg, path, line, col)

    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise err(f"unknown section [{sec}]", sec)
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                raise err(f"unknown key {key!r} in [{sec}]", sec, key)

    def get(section, key, conv=str, default=None, required=False):
        if not cp.has_option(section, key):
            if required:
                line, _ = loc.at(section)
                raise ConfigError(f"missing required key {key!r} in [{section}]", path, line, 1)
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as e:
            raise err(f"bad value {raw!r} for {key!r}: {e}", section, key) from None

    def ints(raw):
        return [int(x) for x in _split(raw)]

    def floats(raw):
        return [float(x) for x in _split(raw)]

    harness = get("experiment", "harness", str, required=True).strip().lower()
    if harness not in HARNESSES:
        raise err(f"harness must be one of {', '.join(HARNESSES)}", "experiment", "harness")
    seed = get("experiment", "seed", int, 0)
    out = Path(get("experiment", "out", str, "results"))

    kind = get("driving", "kind", str, required=True).strip().lower()
    drv = {"kind": kind, "n": get("driving", "n", int), "labels": get("driving", "labels", ints),
           "alphabet": get("driving", "alphabet", int), "probs": get("driving", "probs", floats),
           "seed": get("driving", "seed", int, seed)}
    if kind not in ("cycle", "bernoulli"):
        raise err("driving kind must be cycle or bernoulli", "driving", "kind")
    if kind == "cycle" and (drv["n"] is None or drv["n"] < 1):
        raise err("cycle driving needs a positive n", "driving",
                  "n" if drv["n"] is not None else None)
    if drv["probs"] is not None:
        p = drv["probs"]
        if min(p) < 0 or abs(sum(p) - 1) > 1e-12:
            raise err("probs must be nonnegative and sum to 1", "driving", "probs")

    cfg = ExperimentConfig(harness=harness, seed=seed, out=out, driving=drv, source=Path(path))
    cfg.fibers = get("driving", "fibers", ints)
    cfg.seed_densities = get("experiment", "seed_densities", int, 0)

    mats, maps = get("cocycle", "matrices"), get("cocycle", "maps")
    if (mats is None) == (maps is None):
        raise err("give exactly one of matrices= or maps= in [cocycle]", "cocycle")
    for key, val in (("matrices", mats), ("maps", maps)):
        if val is not None:
            p = base / val.strip()
            if not p.is_file():
                raise err(f"file not found: {p}", "cocycle", key)
            setattr(cfg, key, p)
    cfg.resolution = get("cocycle", "resolution", int)
    cfg.ladder = get("cocycle", "ladder", ints, [])
    cfg.subsamples = get("cocycle", "subsamples", int, 64)
    cfg.norm = get("cocycle", "norm", str, "absolute-sum").strip()
    cfg.f = get("cocycle", "f", str, "random").strip()
    if cfg.resolution is not None and cfg.resolution < 1:
        raise err("resolution must be positive", "cocycle", "resolution")
    if cfg.ladder:
        if min(cfg.ladder) < 1:
            raise err("ladder resolutions must be positive", "cocycle", "ladder")
        if any(b <= a for a, b in zip(cfg.ladder, cfg.ladder[1:])):
            raise err("ladder must be strictly increasing", "cocycle", "ladder")
    if maps is not None and cfg.resolution is None and not cfg.ladder:
        raise err("maps= needs resolution= or ladder=", "cocycle", "maps")
    if cfg.subsamples < 1:
        raise err("subsamples must be positive", "cocycle", "subsamples")
    if cfg.norm not in ("absolute-sum", "euclidean", "max"):
        raise err("norm must be absolute-sum, euclidean or max", "cocycle", "norm")

    cfg.tol = get("tolerances", "tol", float)
    cfg.skew_tol = get("tolerances", "skew", float, 1e-12)
    cfg.ui_level = get("tolerances", "ui_level", float, 0.5)
    cfg.ui_delta = get("tolerances", "ui_delta", float)
    cfg.eps = get("tolerances", "eps", floats, [1e-2, 1e-4])
    if cfg.tol is not None and cfg.tol <= 0:
        raise err("tol must be positive", "tolerances", "tol")
    if any(e <= 0 for e in cfg.eps):
        raise err("eps values must be positive", "tolerances", "eps")

    cfg.n_max = get("horizons", "n_max", int)
    cfg.trace = get("horizons", "trace", int, 256)
    cfg.depth = get("horizons", "depth", int, 6)
    cfg.ladder_horizon = get("horizons", "ladder", int, 2**17)
    cfg.cylinders = get("horizons", "cylinders", int, 10**6)
    for key in ("trace", "depth", "ladder", "cylinders"):
        attr = "ladder_horizon" if key == "ladder" else key
        if getattr(cfg, attr) < 1:
            raise err(f"{key} must be positive", "horizons", key)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path), 0, 0) from None
    return parse_config(text, path, path.parent)
