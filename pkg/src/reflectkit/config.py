"""INI experiment configuration.

An experiment is described by an INI file (configparser dialect):

    [network]
    zc0 = 50.0
    coupling_h = 0.0

    [branch.1]
    tau = 1.0
    q = 0.0            ; constant, or a whitespace-separated sample list
    samples = 33
    multiplicity = 1

    [grid]
    omega_min = 0.1
    omega_max = 40.0
    count = 512
    settings = neumann dirichlet

    [noise]
    sigma = 0.0
    seed = 1234

    [tolerances]
    geometry_residual = 1e-3
    resonance_threshold = 1e-3
    fit_convergence = 1e-10

    [output]
    directory = out

Only linear frequency grids are supported; the pole detectors assume a
uniform bracketing density. An external network file can be pulled in with
``file = other.ini`` inside ``[network]``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .line_model import BoundarySetting, BranchSpec, StarNetwork, make_network


@dataclass(frozen=True)
class ExperimentConfig:
    zc0: float
    coupling_h: float
    branches: tuple                 # BranchSpec per group, ordered as listed
    multiplicities: tuple
    omega_min: float
    omega_max: float
    count: int
    settings: tuple                 # BoundarySetting values to simulate
    sigma: float = 0.0
    seed: int | None = None
    geometry_residual: float = 1e-3
    resonance_threshold: float = 1e-3
    fit_convergence: float = 1e-10
    out_dir: str = "out"
    echo: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.omega_min > 0.0:
            raise ParameterError("grid.omega_min must be positive")
        if not self.omega_max > self.omega_min:
            raise ParameterError("grid.omega_max must exceed grid.omega_min")
        if self.count < 2:
            raise ParameterError("grid.count must be at least 2")
        if self.sigma < 0.0:
            raise ParameterError("noise.sigma must be nonnegative")
        if self.sigma > 0.0 and self.seed is None:
            raise ParameterError(
                "noise.seed is required whenever noise.sigma > 0"
            )
        if not self.branches:
            raise ParameterError("at least one [branch.*] section is required")
        if not self.settings:
            raise ParameterError("grid.settings must name at least one setting")

    def omega_grid(self) -> np.ndarray:
        return np.linspace(self.omega_min, self.omega_max, self.count)

    def network(self) -> StarNetwork:
        expanded = []
        for spec, mult in zip(self.branches, self.multiplicities):
            expanded.extend([spec] * mult)
        return make_network(expanded, self.zc0, coupling_h=self.coupling_h)


def _get(parser, section, option, cast, default=None, *, required=False):
    if not parser.has_option(section, option):
        if required:
            raise ParameterError(f"missing required option {section}.{option}")
        return default
    raw = parser.get(section, option)
    try:
        return cast(raw)
    except ValueError:
        raise ParameterError(
            f"option {section}.{option} has invalid value {raw!r}"
        ) from None


def _parse_branch(parser, section, zc0) -> tuple:
    tau = _get(parser, section, "tau", float, required=True)
    n = _get(parser, section, "samples", int, default=33)
    if n < 2:
        raise ParameterError(f"{section}.samples must be at least 2")
    raw_q = parser.get(section, "q", fallback="0.0")
    vals = np.array([float(t) for t in raw_q.replace(",", " ").split()])
    if vals.size == 1:
        q = np.full(n, vals[0])
    else:
        q = vals
    mult = _get(parser, section, "multiplicity", int, default=1)
    if mult < 1:
        raise ParameterError(f"{section}.multiplicity must be positive")
    spec = BranchSpec(tau=tau, q=q, zc_at_node=zc0, zc_slope_at_node=0.0)
    return spec, mult


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(os.fspath(path))
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")

    zc0 = _get(parser, "network", "zc0", float, default=50.0)
    coupling_h = _get(parser, "network", "coupling_h", float, default=0.0)

    net_parser = parser
    ext = parser.get("network", "file", fallback=None)
    if ext:
        ext_path = os.path.join(os.path.dirname(os.fspath(path)), ext)
        net_parser = configparser.ConfigParser(
            inline_comment_prefixes=(";", "#"))
        if not net_parser.read(ext_path):
            raise FileNotFoundError(f"network file not found: {ext_path}")

    branch_sections = sorted(
        (s for s in net_parser.sections() if s.startswith("branch.")),
        key=lambda s: s.split(".", 1)[1],
    )
    branches, mults = [], []
    for sec in branch_sections:
        spec, mult = _parse_branch(net_parser, sec, zc0)
        branches.append(spec)
        mults.append(mult)

    raw_settings = parser.get("grid", "settings", fallback="neumann")
    try:
        settings = tuple(
            BoundarySetting.parse(t)
            for t in raw_settings.replace(",", " ").split()
        )
    except ValueError as exc:
        raise ParameterError(f"grid.settings: {exc}") from None

    seed = _get(parser, "noise", "seed", int) if parser.has_section("noise") else None

    echo = {s: dict(parser.items(s)) for s in parser.sections()}
    return ExperimentConfig(
        zc0=zc0,
        coupling_h=coupling_h,
        branches=tuple(branches),
        multiplicities=tuple(mults),
        omega_min=_get(parser, "grid", "omega_min", float, required=True),
        omega_max=_get(parser, "grid", "omega_max", float, required=True),
        count=_get(parser, "grid", "count", int, required=True),
        settings=settings,
        sigma=_get(parser, "noise", "sigma", float, default=0.0) or 0.0,
        seed=seed,
        geometry_residual=_get(parser, "tolerances", "geometry_residual",
                               float, default=1e-3),
        resonance_threshold=_get(parser, "tolerances", "resonance_threshold",
                                 float, default=1e-3),
        fit_convergence=_get(parser, "tolerances", "fit_convergence",
                             float, default=1e-10),
        out_dir=parser.get("output", "directory", fallback="out"),
        echo=echo,
    )
