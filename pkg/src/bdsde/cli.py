"""Command-line front end: ``bdsde {converge,simulate,diagnose,regress-study}``.

Exit codes: 0 success (or slope inside the acceptance band), 1 slope
outside the band, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .backward import backward_sweep
from .condexp import QuadratureProvider, make_provider
from .convergence import run_convergence
from .diagnostics import l2_regularity_stat
from .errors import (
    InvalidArgumentError,
    InvalidInputError,
    MeshTooCoarseError,
    NoConvergenceError,
    NumericOverflowError,
    OutOfDomainError,
    ResourceLimitError,
    UnsupportedDimensionError,
)
from .forward import simulate_forward
from .io import read_config, write_config
from .lsmc import gap_decay, perturbation_study, regression_error_probe
from .noise import dump_noise, sample_noise
from .presets import get_preset
from .problem import make_uniform_partition
from .regression import RegressionSpec, truncation_ledger

EXIT_OK, EXIT_BAND, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "preset": "martingale",
    "levels": "8,16,32,64",
    "paths": "10000",
    "seed": "0",
    "provider": "quadrature",
    "basis": "polynomial",
    "basis_degree": "3",
    "bins": "10",
    "ridge": "0",
    "mode": "frozen-b",
    "truncate": "off",
    "b_realizations": "25",
    "slope_low": "0.8",
    "slope_high": "1.2",
    "inner_paths": "200",
    "horizon": "1.0",
    "decay_paths": "1000,10000,100000",
    "perturb_eps": "0.0001,0.001,0.01",
    "perturb_levels": "4,8,16",
    "lp": "2",
}

FLAG_KEYS = ("preset", "levels", "paths", "seed", "provider", "basis_degree", "mode", "truncate")


class ConfigError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdsde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("converge", "simulate", "diagnose", "regress-study"):
        p = sub.add_parser(name)
        p.add_argument("--preset")
        p.add_argument("--levels", help="comma-separated step counts")
        p.add_argument("--paths", help="number of Monte Carlo paths")
        p.add_argument("--seed")
        p.add_argument("--provider", choices=["quadrature", "nested", "regression"])
        p.add_argument("--basis-degree", dest="basis_degree")
        p.add_argument("--mode", choices=["frozen-b", "per-path-b"])
        p.add_argument("--truncate", choices=["on", "off"])
        p.add_argument("--out", required=False, default=None, help="output directory")
        p.add_argument("--config", help="file of 'key = value' lines")
        p.add_argument("--dump-noise", action="store_true", help="also write the noise grid (BDSN format)")
    return parser


def _ints(text: str, key: str) -> list:
    try:
        vals = [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"{key} must be comma-separated integers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{key} is empty")
    return vals


def _floats(text: str, key: str) -> list:
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"{key} must be comma-separated numbers, got {text!r}") from None


def resolve(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            cfg.update(read_config(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for key in FLAG_KEYS:
        val = getattr(args, key)
        if val is not None:
            cfg[key] = str(val)
    unknown = set(cfg) - set(DEFAULTS) - {"out"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if args.out is not None:
        cfg["out"] = args.out
    if "out" not in cfg:
        raise ConfigError("an output directory is required (--out or 'out = DIR')")
    return cfg


class Settings:
    """Typed view of the resolved configuration."""

    def __init__(self, cfg: dict):
        self.preset = get_preset(cfg["preset"])
        self.levels = _ints(cfg["levels"], "levels")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])) or min(self.levels) < 1:
            raise ConfigError("levels must be positive and strictly increasing")
        self.paths = _ints(cfg["paths"], "paths")[0]
        if self.paths < 1:
            raise ConfigError("paths must be >= 1")
        self.seed = _ints(cfg["seed"], "seed")[0]
        self.provider = cfg["provider"]
        if self.provider not in ("quadrature", "nested", "regression"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        self.mode = {"frozen-b": "frozen", "per-path-b": "per-path"}.get(cfg["mode"])
        if self.mode is None:
            raise ConfigError(f"unknown mode {cfg['mode']!r}")
        if cfg["truncate"] not in ("on", "off"):
            raise ConfigError("truncate must be on or off")
        self.truncate = cfg["truncate"] == "on"
        self.reg = RegressionSpec(
            basis=cfg["basis"], degree=_ints(cfg["basis_degree"], "basis_degree")[0],
            bins=_ints(cfg["bins"], "bins")[0], ridge=_floats(cfg["ridge"], "ridge")[0],
            regressors="x-b" if self.mode == "per-path" else "x",
        )
        self.b_realizations = _ints(cfg["b_realizations"], "b_realizations")[0]
        self.band = (_floats(cfg["slope_low"], "slope_low")[0], _floats(cfg["slope_high"], "slope_high")[0])
        self.inner_paths = _ints(cfg["inner_paths"], "inner_paths")[0]
        self.T = _floats(cfg["horizon"], "horizon")[0]
        self.decay_paths = _ints(cfg["decay_paths"], "decay_paths")
        self.perturb_eps = _floats(cfg["perturb_eps"], "perturb_eps")
        self.perturb_levels = _ints(cfg["perturb_levels"], "perturb_levels")
        self.lp = _floats(cfg["lp"], "lp")[0]
        self.out = cfg["out"]


def _provider(s: Settings, spec, part, noise):
    return make_provider(s.provider, {"spec": spec, "partition": part, "dB": noise.dB, "seed": s.seed,
                                      "inner_paths": s.inner_paths, "regression": s.reg})


def cmd_converge(s: Settings, args) -> int:
    rep = run_convergence(s.preset, s.levels, s.paths, s.seed, provider=s.provider,
                          b_realizations=s.b_realizations, reg_spec=s.reg, truncate=s.truncate,
                          mode=s.mode, T=s.T)
    rep.to_csv(os.path.join(s.out, "converge.csv"))
    if rep.exact:
        print("all errors are at rounding level: the scheme is exact for this preset")
        return EXIT_OK
    slope = rep.fit.slope if rep.fit is not None else float("nan")
    print(f"slope {slope:.4f} (band {s.band[0]}..{s.band[1]})")
    if rep.adjusted_fit is not None:
        print(f"slope against mesh minus reference mesh {rep.adjusted_fit.slope:.4f} (diagnostic)")
    return EXIT_OK if rep.within(*s.band) else EXIT_BAND


def cmd_simulate(s: Settings, args) -> int:
    spec = s.preset.spec(s.T)
    part = make_uniform_partition(s.T, s.levels[-1])
    noise = sample_noise(part, spec.d, spec.ell, s.paths, s.seed, s.mode)
    fw = simulate_forward(spec, part, noise)
    ledger = truncation_ledger(part, noise.dB, spec.K) if s.truncate else None
    provider = _provider(s, spec, part, noise)
    sol = backward_sweep(spec, part, fw, noise, provider, ledger=ledger)
    fw.to_csv(os.path.join(s.out, "forward.csv"))
    sol.to_csv(os.path.join(s.out, "backward.csv"))
    if isinstance(provider, QuadratureProvider):
        sol.value_table().to_csv(os.path.join(s.out, "value_table.csv"))
    if ledger is not None:
        ledger.to_csv(os.path.join(s.out, "ledger.csv"))
    if args.dump_noise:
        dump_noise(noise, os.path.join(s.out, "noise.bdsn"))
    return EXIT_OK


def cmd_diagnose(s: Settings, args) -> int:
    rep = l2_regularity_stat(s.preset, s.levels, s.paths, s.seed, s.T)
    rep.to_csv(os.path.join(s.out, "regularity.csv"))
    return EXIT_OK


def cmd_regress_study(s: Settings, args) -> int:
    spec = s.preset.spec(s.T)
    if spec.d != 1:
        raise UnsupportedDimensionError("the regression study needs a one-dimensional oracle")
    part = make_uniform_partition(s.T, s.levels[0])
    noise = sample_noise(part, spec.d, spec.ell, s.paths, s.seed)
    fw = simulate_forward(spec, part, noise)
    rep = regression_error_probe(QuadratureProvider(spec), make_provider("regression", {"regression": s.reg}),
                                 spec, part, fw, noise, p=s.lp, C=spec.K)
    rep.to_csv(os.path.join(s.out, "probe.csv"))
    gap_decay(spec, s.levels[0], s.decay_paths, s.seed, s.reg, s.lp).to_csv(os.path.join(s.out, "decay.csv"))
    perturbation_study(spec, s.perturb_levels, s.perturb_eps, s.seed,
                       truncate=s.truncate).to_csv(os.path.join(s.out, "perturbation.csv"))
    return EXIT_OK


COMMANDS = {
    "converge": cmd_converge,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "regress-study": cmd_regress_study,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = resolve(args)
        settings = Settings(cfg)
        os.makedirs(settings.out, exist_ok=True)
        write_config(os.path.join(settings.out, "resolved.config"),
                     {k: v for k, v in cfg.items() if k != "out"})
    except (ConfigError, InvalidArgumentError, OSError) as exc:
        print(f"bdsde: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with np.errstate(over="raise", invalid="ignore"):
            return COMMANDS[args.command](settings, args)
    except (NumericOverflowError, NoConvergenceError, MeshTooCoarseError, OutOfDomainError,
            InvalidInputError, FloatingPointError) as exc:
        print(f"bdsde: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidArgumentError, UnsupportedDimensionError, ResourceLimitError, ConfigError, OSError) as exc:
        print(f"bdsde: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
