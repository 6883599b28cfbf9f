"""Command-line entry point: ``clsynth demo|synth|simulate``.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.

    system     chain:N  or  matrices:DIR   (DIR holds A.txt, B2.txt, ...)
    algorithm  sls-sf | sls-of-lqg | iop
    T          FIR horizon (default 20)
    horizon    simulation length (default 25)
    noise      none | impulse:t,channel,mag | gauss:std,seed[,lo:hi]
               several terms may be joined with '+'
    sigma      sensor noise gain of the chain (default 0)
    weight_x   scale of C1 (default 1)
    weight_u   scale of D12 (default 1)
    output     output directory (default "out")
    program    optional path for a triplet dump of the synthesis program

Channels are 0-based indices into the disturbance vector ``w``.
"""

import argparse
from dataclasses import dataclass, replace
import logging
import os
import sys
import warnings

import numpy as np

from .controllers import controller_from_blocks
from .errors import (InfeasibleSynthesis, InvalidArgument, NumericalFailure, SynthesisError,
                     UnstablePlant, UnsupportedFeedthrough)
from .export import write_result
from .fir import read_blocks, write_blocks
from .iop import IOP
from .noise import FixedImpulse, GaussianNoise, SumNoise, ZeroNoise
from .qp import write_triplets
from .simulator import Simulator
from .sls import SLS, H2Objective
from .systems import center_node, load_system, make_chain

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

ALGORITHMS = ("sls-sf", "sls-of-lqg", "iop")
DEMOS = ("chain-sf", "chain-iop", "chain-lqg-noiseless", "chain-lqg-noisy")
SETTLE_REL = 1e-6


class ConfigError(InvalidArgument):
    pass


@dataclass(frozen=True)
class RunConfig:
    system: str = "chain:10"
    algorithm: str = "sls-sf"
    T: int = 20
    horizon: int = 25
    noise: str = "none"
    sigma: float = 0.0
    weight_x: float = 1.0
    weight_u: float = 1.0
    output: str = "out"
    program: str = ""


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonnegative(text):
    v = float(text)
    if not v >= 0:
        raise ValueError("must be nonnegative")
    return v


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


_PARSERS = {
    "system": str,
    "algorithm": _choice(ALGORITHMS),
    "T": _positive_int,
    "horizon": _positive_int,
    "noise": str,
    "sigma": _nonnegative,
    "weight_x": _nonnegative,
    "weight_u": _nonnegative,
    "output": str,
    "program": str,
}


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines into a :class:`RunConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {value!r} ({exc})") from None
    cfg = RunConfig(**values)
    # validate the compound fields early so errors still point at the file
    build_system(cfg, source)
    return cfg


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), path)


def build_system(cfg, source="<config>"):
    kind, _, arg = cfg.system.partition(":")
    if kind == "chain":
        try:
            n = _positive_int(arg)
        except ValueError:
            raise ConfigError(f"{source}: bad value for 'system': {cfg.system!r}") from None
        system = make_chain(n, cfg.sigma)
    elif kind == "matrices":
        if cfg.sigma:
            raise ConfigError(f"{source}: 'sigma' only applies to chain systems")
        system = load_system(arg)
    else:
        raise ConfigError(f"{source}: 'system' must be chain:N or matrices:DIR, got {cfg.system!r}")
    if cfg.weight_x != 1.0 or cfg.weight_u != 1.0:
        system = system.copy(C1=cfg.weight_x * system.C1, D12=cfg.weight_u * system.D12)
    return system


def build_noise(text, n_w):
    """Noise model from ``impulse:t,ch,mag``, ``gauss:std,seed[,lo:hi]`` terms joined by '+'."""
    parts = []
    for term in text.split("+"):
        kind, _, args = term.strip().partition(":")
        fields = [a.strip() for a in args.split(",")] if args else []
        try:
            if kind == "none" and not fields:
                parts.append(ZeroNoise(n_w))
            elif kind == "impulse" and len(fields) == 3:
                t, ch, mag = int(fields[0]), int(fields[1]), float(fields[2])
                if not 0 <= ch < n_w or t < 0:
                    raise ValueError(f"channel must lie in 0..{n_w - 1} and time be >= 0")
                parts.append(FixedImpulse.at_channel(n_w, ch, mag, fire_time=t))
            elif kind == "gauss" and len(fields) in (2, 3):
                std, seed = float(fields[0]), int(fields[1])
                channels = None
                if len(fields) == 3:
                    lo, hi = (int(v) for v in fields[2].split(":"))
                    if not 0 <= lo < hi <= n_w:
                        raise ValueError(f"channel range must lie in 0..{n_w}")
                    channels = slice(lo, hi)
                parts.append(GaussianNoise.isotropic(n_w, std, seed, channels))
            else:
                raise ValueError("unrecognized form")
        except ValueError as exc:
            raise ConfigError(f"bad noise term {term.strip()!r}: {exc}") from None
    return parts[0] if len(parts) == 1 else SumNoise(*parts)


def build_algorithm(cfg):
    if cfg.algorithm == "sls-sf":
        return SLS("sf", cfg.T, [H2Objective()])
    if cfg.algorithm == "sls-of-lqg":
        return SLS("of", cfg.T, [H2Objective()])
    return IOP(cfg.T)


def synthesize(cfg, system=None):
    """Run the configured synthesis; returns ``(result, blocks)``."""
    system = build_system(cfg) if system is None else system
    algorithm = build_algorithm(cfg)
    if cfg.program:
        problem, objective = algorithm.assemble(system)[:2]
        write_triplets(problem.to_program(objective), cfg.program)
    result = algorithm.solve(system)
    return result, result.params.blocks()


def simulate(cfg, blocks, system=None):
    system = build_system(cfg) if system is None else system
    controller = controller_from_blocks(blocks, system.D22)
    noise = build_noise(cfg.noise, system.dims.n_w)
    return Simulator().simulate(system, controller, noise, cfg.horizon)


def settling_step(x, rel=SETTLE_REL):
    """First step after which ``max |x|`` stays below ``rel`` times its peak."""
    mag = np.max(np.abs(x), axis=1)
    peak = mag.max(initial=0.0)
    above = np.nonzero(mag > rel * peak)[0]
    if peak == 0:
        return 0
    if above[-1] == len(mag) - 1:
        return None
    return int(above[-1] + 1)


def summary_lines(label, sim, objective):
    step = settling_step(sim.x)
    return [
        f"{'run':<22}{'peak |x|':>14}{'settling step':>15}{'objective':>18}",
        f"{label:<22}{np.abs(sim.x).max():14.6e}{'-' if step is None else step:>15}{objective:18.10e}",
    ]


def demo_config(name, T=20, horizon=25, output=None):
    node = center_node(10)
    base = RunConfig(system="chain:10", T=T, horizon=horizon,
                     noise=f"impulse:0,{node},10", output=output or os.path.join("out", name))
    if name == "chain-sf":
        return replace(base, algorithm="sls-sf")
    if name == "chain-iop":
        return replace(base, algorithm="iop")
    if name == "chain-lqg-noiseless":
        return replace(base, algorithm="sls-of-lqg")
    if name == "chain-lqg-noisy":
        # unit-variance sensor channels scaled by sigma = 0.1 through D21
        return replace(base, algorithm="sls-of-lqg", sigma=0.1,
                       noise=f"impulse:0,{node},10+gauss:1,0,10:20")
    raise ConfigError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")


def run_demo(name, T=20, horizon=25, output=None, seed=None):
    cfg = demo_config(name, T, horizon, output)
    if seed is not None and "gauss" in cfg.noise:
        cfg = replace(cfg, noise=cfg.noise.replace("gauss:1,0,", f"gauss:1,{seed},"))
    system = build_system(cfg)
    result, blocks = synthesize(cfg, system)
    sim = simulate(cfg, blocks, system)
    os.makedirs(cfg.output, exist_ok=True)
    write_blocks(blocks, os.path.join(cfg.output, "params.txt"))
    write_result(sim, cfg.output)
    lines = summary_lines(name, sim, result.objective)
    extra = {}
    if name == "chain-iop":
        ref_cfg = replace(cfg, algorithm="sls-sf")
        ref, ref_blocks = synthesize(ref_cfg, system)
        ref_sim = simulate(ref_cfg, ref_blocks, system)
        extra["max_u_diff"] = float(np.max(np.abs(sim.u - ref_sim.u)))
        lines += summary_lines("chain-sf (reference)", ref_sim, ref.objective)[1:]
        lines.append(f"max |u_IOP - u_SF| = {extra['max_u_diff']:.3e}")
    with open(os.path.join(cfg.output, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return sim, result, lines, extra


def _exit_code(exc):
    if isinstance(exc, InfeasibleSynthesis):
        return EXIT_INFEASIBLE
    if isinstance(exc, NumericalFailure):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValueError, UnstablePlant, UnsupportedFeedthrough, OSError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def _build_parser():
    parser = argparse.ArgumentParser(prog="clsynth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("demo", help="run one of the chain experiments")
    p.add_argument("name", choices=DEMOS)
    p.add_argument("--T", type=int, default=20)
    p.add_argument("--horizon", type=int, default=25)
    p.add_argument("--output")
    p.add_argument("--seed", type=int, help="seed of the sensor noise (chain-lqg-noisy)")
    p = sub.add_parser("synth", help="synthesize and write parameter files")
    p.add_argument("config")
    p = sub.add_parser("simulate", help="simulate a controller from parameter files")
    p.add_argument("config")
    p.add_argument("params")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            if args.command == "demo":
                if args.T < 1 or args.horizon < 1:
                    raise ConfigError("T and horizon must be positive")
                _, _, lines, _ = run_demo(args.name, args.T, args.horizon, args.output, args.seed)
                print("\n".join(lines))
            elif args.command == "synth":
                cfg = read_config(args.config)
                result, blocks = synthesize(cfg)
                os.makedirs(cfg.output, exist_ok=True)
                path = os.path.join(cfg.output, "params.txt")
                write_blocks(blocks, path)
                print(f"objective {result.objective:.10e}; parameters written to {path}")
            else:
                cfg = read_config(args.config)
                blocks = read_blocks(args.params)
                sim = simulate(cfg, blocks)
                write_result(sim, cfg.output)
                step = settling_step(sim.x)
                print(f"peak |x| {np.abs(sim.x).max():.6e}; settling step "
                      f"{'-' if step is None else step}; output in {cfg.output}")
    except InfeasibleSynthesis as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SynthesisError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
