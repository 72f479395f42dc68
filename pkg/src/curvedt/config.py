"""Experiment configuration: INI files with sections, environment overrides.

Every key can be overridden by an environment variable named
``CURVEDT_<SECTION>_<KEY>`` (upper case), e.g. ``CURVEDT_PLAN_ROTATIONS=4``.
"""

import configparser
import dataclasses
import io as _stdio
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import CurvedtError

ENV_PREFIX = "CURVEDT_"


class ConfigError(CurvedtError, ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class PhysicsSection:
    frequency: float = 500e3
    c0: float = 1500.0

    @property
    def wavelength(self):
        return self.c0 / self.frequency

    @property
    def k0(self):
        return 2 * np.pi * self.frequency / self.c0


@dataclass
class CurveSection:
    family: str = "oval"
    long_axis: float = 0.200
    short_axis: float = 0.150
    spacing: float = 0.97e-3
    circumference: float = 0.0
    csv: str = ""


@dataclass
class PhantomSection:
    kind: str = "shepp_logan"
    pitch: float = 0.5e-3
    c_scatter: float = 1550.0
    contrast: float = 50.0
    half_size: float = 0.045
    deformation: str = "3:0.15:0.4, 2:0.04:1.1"
    offset: float = 0.025
    points: str = "0.0:0.0"
    supersample: int = 1


@dataclass
class VirtualSection:
    elements: int = 900
    span: float = 1.0
    separation: float = 0.220


@dataclass
class PlanSection:
    extent: float = 0.100
    pixels: int = 256
    rotations: int = 2
    fill: float = 1.0
    edge: float = 0.05
    aperture: bool = True


@dataclass
class FilterSection:
    cutoff_fraction: float = 0.9
    order: int = 4


@dataclass
class KernelSection:
    method: str = "image"
    strict: bool = True
    n_interior: int = 4500
    tol: float = 1e-6
    restart: int = 50
    maxit: int = 2000


@dataclass
class RunSection:
    seed: int = 0
    threads: int = 1
    noise: float = 0.0


@dataclass
class OutputSection:
    dir: str = "out"
    phantom: str = "phantom.f64"
    measurements: str = "measurements.cdt"
    image: str = "image.f64"
    qgrid: str = "qgrid.bin"
    report: str = "report.txt"
    benchmark: str = "benchmark.csv"


@dataclass
class ExperimentConfig:
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    curve: CurveSection = field(default_factory=CurveSection)
    phantom: PhantomSection = field(default_factory=PhantomSection)
    virtual: VirtualSection = field(default_factory=VirtualSection)
    plan: PlanSection = field(default_factory=PlanSection)
    filter: FilterSection = field(default_factory=FilterSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)

    def sections(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def validate(self):
        p = self.physics
        if not (p.frequency > 0 and p.c0 > 0):
            raise ConfigError("frequency and c0 must be > 0")
        if self.plan.pixels < 2 or not self.plan.extent > 0 or self.plan.rotations < 1:
            raise ConfigError("plan needs extent > 0, pixels >= 2, rotations >= 1")
        if self.kernel.method not in ("image", "extinction"):
            raise ConfigError(f"unknown kernel method {self.kernel.method!r}")
        if self.phantom.kind not in ("shepp_logan", "resolution", "points", "empty"):
            raise ConfigError(f"unknown phantom kind {self.phantom.kind!r}")
        if not self.filter.cutoff_fraction > 0 or self.filter.order < 1:
            raise ConfigError("filter needs cutoff_fraction > 0 and order >= 1")
        if self.virtual.elements < 2 or not self.virtual.separation > 0:
            raise ConfigError("virtual lines need >= 2 elements and a positive separation")
        return self


def _parse_value(kind, text, where):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {kind.__name__}") from None


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_TYPES = {"float": float, "int": int, "str": str, "bool": bool}


def _field_type(f):
    t = f.type
    return _TYPES[t] if isinstance(t, str) else t


def from_parser(parser):
    cfg = ExperimentConfig()
    known = {name for name, _ in cfg.sections()}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
    for name, sec in cfg.sections():
        if not parser.has_section(name):
            continue
        names = {f.name: f for f in fields(sec)}
        for key, raw in parser.items(name):
            if key not in names:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            setattr(sec, key, _parse_value(_field_type(names[key]), raw, f"[{name}] {key}"))
    return cfg


def apply_env(cfg, environ=None):
    """Apply ``CURVEDT_<SECTION>_<KEY>`` overrides in place; returns ``cfg``."""
    environ = os.environ if environ is None else environ
    for name, sec in cfg.sections():
        for f in fields(sec):
            var = f"{ENV_PREFIX}{name.upper()}_{f.name.upper()}"
            if var in environ:
                setattr(sec, f.name, _parse_value(_field_type(f), environ[var], var))
    return cfg


def load(path=None, environ=None):
    """Defaults, then the file at ``path`` (if given), then the environment."""
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as err:
            raise ConfigError(f"{path}: {err}") from None
    cfg = from_parser(parser)
    return apply_env(cfg, environ).validate()


def loads(text, environ=None):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err)) from None
    return apply_env(from_parser(parser), environ if environ is not None else {}).validate()


def dumps(cfg):
    parser = configparser.ConfigParser(interpolation=None)
    for name, sec in cfg.sections():
        parser[name] = {f.name: _format_value(getattr(sec, f.name)) for f in fields(sec)}
    buf = _stdio.StringIO()
    parser.write(buf)
    return buf.getvalue()


def as_dict(cfg):
    return dataclasses.asdict(cfg)
