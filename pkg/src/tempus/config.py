"""INI run configs (``[section]`` with ``key = value``) and their diagnostics.

Every failure is a :class:`ConfigError` that names the file, section, key and,
when it can be located, the line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .state import NATURAL, GaussianComponent, MomentumGrid, UnitSystem, superposition, time_grid


class ConfigError(ValueError):
    pass


def _locate(path, section, key=None):
    """Line number of ``key`` inside ``[section]`` (or of the section header)."""
    if path is None:
        return None
    cur = None
    for i, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return i
            continue
        if cur == section and key is not None:
            kk = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            if kk == key.lower():
                return i
    return None


@dataclass
class RunConfig:
    parser: configparser.ConfigParser
    path: str | None = None

    @classmethod
    def load(cls, path) -> "RunConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
        try:
            cp.read_string(text, source=str(path))
        except configparser.MissingSectionHeaderError as e:
            raise ConfigError(f"{path}:{e.lineno}: line outside any [section]") from None
        except configparser.ParsingError as e:
            ln = e.errors[0][0] if e.errors else "?"
            raise ConfigError(f"{path}:{ln}: malformed line") from None
        except configparser.Error as e:
            ln = getattr(e, "lineno", "?")
            raise ConfigError(f"{path}:{ln}: {e.message.splitlines()[0]}") from None
        return cls(cp, str(path))

    @classmethod
    def empty(cls) -> "RunConfig":
        return cls(configparser.ConfigParser())

    def where(self, section, key=None) -> str:
        ln = _locate(self.path, section, key)
        loc = f"{self.path}:{ln}" if ln else (self.path or "<config>")
        return f"{loc}: [{section}]" + (f" {key}" if key else "")

    def has(self, section, key=None) -> bool:
        if not self.parser.has_section(section):
            return False
        return key is None or self.parser.has_option(section, key)

    def sections(self, prefix: str) -> list[str]:
        out = [s for s in self.parser.sections() if s == prefix or s.startswith(prefix + ".")]
        return sorted(out, key=lambda s: [int(p) if p.lstrip("-").isdigit() else p for p in s.split(".")[1:]])

    def get(self, section, key, kind=float, default=...):
        if not self.has(section, key):
            if default is ...:
                if not self.has(section):
                    raise ConfigError(f"{self.path or '<config>'}: missing section [{section}]")
                raise ConfigError(f"{self.where(section)}: missing key '{key}'")
            return default
        raw = self.parser.get(section, key)
        try:
            if kind is bool:
                return self.parser.getboolean(section, key)
            val = kind(raw)
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: cannot parse '{raw}' as {kind.__name__}") from None
        if kind is float and not np.isfinite(val):
            raise ConfigError(f"{self.where(section, key)}: value must be finite")
        return val

    def positive(self, section, key, kind=float, default=...):
        v = self.get(section, key, kind, default)
        if v is not None and not v > 0:
            raise ConfigError(f"{self.where(section, key)}: must be positive, got {v}")
        return v

    def choice(self, section, key, options, default=...):
        v = self.get(section, key, str, default)
        if v not in options:
            raise ConfigError(f"{self.where(section, key)}: '{v}' is not one of {sorted(options)}")
        return v

    def as_dict(self) -> dict:
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}


# -- pieces shared by subcommands --------------------------------------------------

def parse_units(cfg: RunConfig, override: str | None = None) -> UnitSystem:
    hbar = cfg.positive("units", "hbar", float, NATURAL.hbar)
    mass = cfg.positive("units", "mass", float, NATURAL.mass)
    if override:
        for item in override.split(","):
            try:
                k, v = item.split("=")
                k, v = k.strip(), float(v)
            except ValueError:
                raise ConfigError(f"--units: cannot parse '{item}' (expected hbar=..,mass=..)") from None
            if k not in ("hbar", "mass") or not v > 0:
                raise ConfigError(f"--units: '{item}' must set hbar or mass to a positive value")
            hbar, mass = (v, mass) if k == "hbar" else (hbar, v)
    return UnitSystem(hbar, mass)


def parse_times(spec: str | None, cfg: RunConfig | None = None):
    """``tmin:tmax:n`` from the command line, else ``[times]``, else ``None`` (auto window)."""
    if spec:
        try:
            a, b, n = spec.split(":")
            a, b, n = float(a), float(b), int(n)
        except ValueError:
            raise ConfigError(f"--times: cannot parse '{spec}' (expected tmin:tmax:n)") from None
        try:
            return time_grid(a, b, n)
        except ValueError as e:
            raise ConfigError(f"--times: {e}") from None
    if cfg is not None and cfg.has("times"):
        a, b = cfg.get("times", "tmin"), cfg.get("times", "tmax")
        n = cfg.positive("times", "n", int)
        try:
            return time_grid(a, b, n)
        except ValueError as e:
            raise ConfigError(f"{cfg.where('times')}: {e}") from None
    return None


def parse_grid(cfg: RunConfig, section="grid") -> MomentumGrid:
    kmin, kmax = cfg.get(section, "kmin"), cfg.get(section, "kmax")
    n = cfg.positive(section, "n", int)
    try:
        return MomentumGrid.uniform(kmin, kmax, n)
    except ValueError as e:
        raise ConfigError(f"{cfg.where(section)}: {e}") from None


def parse_components(cfg: RunConfig, prefix="component") -> list[GaussianComponent]:
    secs = cfg.sections(prefix)
    if not secs:
        raise ConfigError(f"{cfg.path or '<config>'}: need at least one [{prefix}.N] section")
    out = []
    for s in secs:
        wt = cfg.get(s, "weight", float, 1.0) * np.exp(1j * cfg.get(s, "phase", float, 0.0))
        out.append(GaussianComponent(cfg.get(s, "k0"), cfg.positive(s, "sigma_k"), cfg.get(s, "x0", float, 0.0), wt))
    return out


def parse_packet(cfg: RunConfig, grid: MomentumGrid | None = None):
    grid = grid or parse_grid(cfg)
    comps = parse_components(cfg)
    pos = cfg.get("packet", "positive_only", bool, False)
    try:
        return superposition(grid, comps, positive_only=pos)
    except ValueError as e:
        raise ConfigError(f"{cfg.where(cfg.sections('component')[0])}: {e}") from None


def write_packet_config(path, grid_spec: dict, components, positive_only=False, extra: dict | None = None,
                        header: str = ""):
    """Serialize a packet config (used by the backflow scan)."""
    cp = configparser.ConfigParser()
    cp["grid"] = {k: repr(v) for k, v in grid_spec.items()}
    cp["packet"] = {"positive_only": str(bool(positive_only)).lower()}
    for i, c in enumerate(components, 1):
        w = complex(c.weight)
        cp[f"component.{i}"] = {"k0": repr(float(c.k0)), "sigma_k": repr(float(c.sigma_k)),
                                "x0": repr(float(c.x0)), "weight": repr(abs(w)),
                                "phase": repr(float(np.angle(w)))}
    for sec, items in (extra or {}).items():
        cp[sec] = {k: str(v) for k, v in items.items()}
    with open(path, "w") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        cp.write(fh)


@dataclass
class ConditionalSetup:
    """Everything a CAP run needs, resolved from ``[space]``, ``[absorber]``, ``[potential]``, ``[propagation]``."""

    space: object
    absorber: object
    potential: np.ndarray | None
    dt: float
    steps: int
    extra: dict = field(default_factory=dict)


def parse_conditional(cfg: RunConfig) -> ConditionalSetup:
    from .conditional import AbsorberConfig, SpatialGrid, square_barrier

    L = cfg.positive("space", "length")
    n = cfg.positive("space", "n", int)
    try:
        sg = SpatialGrid.centered(L, n)
    except ValueError as e:
        raise ConfigError(f"{cfg.where('space', 'n')}: {e}") from None
    try:
        ab = AbsorberConfig(cfg.get("absorber", "center", float, 0.0), cfg.get("absorber", "half_width", float, 2.0),
                            cfg.get("absorber", "strength", float, 10.0), cfg.get("absorber", "power", int, 4))
    except ValueError as e:
        raise ConfigError(f"{cfg.where('absorber')}: {e}") from None
    lo, hi = ab.support()
    if lo <= sg.x_values[0] or hi >= sg.x_values[-1]:
        raise ConfigError(f"{cfg.where('absorber')}: absorber support [{lo:g}, {hi:g}] is not inside the box")
    V = None
    if cfg.has("potential"):
        kind = cfg.choice("potential", "kind", {"none", "barrier", "well", "samples", "delta"})
        if kind == "delta":
            raise ConfigError(f"{cfg.where('potential', 'kind')}: a delta potential cannot be sampled on a grid; "
                              "use kind = barrier or samples")
        if kind in ("barrier", "well"):
            V0 = cfg.get("potential", "V0")
            V = square_barrier(sg, V0, cfg.positive("potential", "a"), cfg.get("potential", "center", float, 0.0))
        elif kind == "samples":
            fn = cfg.get("potential", "file", str)
            p = Path(fn) if Path(fn).is_absolute() or cfg.path is None else Path(cfg.path).parent / fn
            try:
                V = np.loadtxt(p, comments="#", delimiter=",", ndmin=1)
            except (OSError, ValueError) as e:
                raise ConfigError(f"{cfg.where('potential', 'file')}: cannot read samples ({e})") from None
            if V.shape != (sg.n,):
                raise ConfigError(f"{cfg.where('potential', 'file')}: expected {sg.n} samples, got {V.size}")
    dt = cfg.get("propagation", "dt")
    if dt == 0:
        raise ConfigError(f"{cfg.where('propagation', 'dt')}: must be nonzero")
    steps = cfg.positive("propagation", "steps", int)
    return ConditionalSetup(sg, ab, V, dt, steps)
