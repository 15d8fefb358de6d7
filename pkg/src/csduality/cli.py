"""Command-line driver: ``csduality <subcommand> [--key value ...] [--config FILE]``.

Every subcommand writes a CSV whose ``#`` header echoes the tool version
and all parameters, followed by one plain row of column names. Rows that
fail to converge are kept with ``converged=0`` and the exit code is 2.
Invalid configurations exit with code 1 and list every problem.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError, CSDualityError

SUBCOMMANDS = ("jump", "naive", "perturb", "selfenergy", "spectral", "sumrule", "energy",
               "bethe", "tba", "validate")


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


# key -> (parser, default, check, description); check returns an error message or None
def _positive(name):
    def check(v):
        vals = v if isinstance(v, list) else [v]
        return f"{name} must be > 0" if any(not x > 0 for x in vals) else None
    return check


def _nonneg(name):
    def check(v):
        vals = v if isinstance(v, list) else [v]
        return f"{name} must be >= 0" if any(x < 0 for x in vals) else None
    return check


def _choice(name, options):
    def check(v):
        return None if v in options else f"{name} must be one of {', '.join(options)}"
    return check


def _at_least(name, m):
    def check(v):
        return f"{name} must be >= {m}" if v < m else None
    return check


KEYS = {
    "a": (_floats, None, _positive("a"), "regulator width(s), comma separated"),
    "beta": (_floats, None, _nonneg("beta"), "coupling(s) beta, comma separated"),
    "k": (_floats, None, None, "momentum / wave number(s), comma separated"),
    "T": (float, 1.0, _positive("T"), "temperature"),
    "mu": (float, 1.0, None, "chemical potential"),
    "c": (_floats, None, _positive("c"), "Lieb-Liniger coupling(s) c = 2/beta"),
    "N": (int, 4, _positive("N"), "particle number for bethe"),
    "L": (float, 10.0, _positive("L"), "ring length for bethe"),
    "I": (_floats, None, None, "Bethe quantum numbers (default: symmetric ground state)"),
    "regulator": (str, "tanh", _choice("regulator", ("tanh", "erf")), "regulator profile"),
    "eta": (float, 0.05, _positive("eta"), "continuation offset eta0"),
    "continuation": (str, "extrapolate", _choice("continuation", ("eta", "extrapolate", "boundary")),
                     "retarded continuation mode"),
    "n": (int, 0, _nonneg("n"), "Matsubara index for selfenergy"),
    "omega": (_floats, None, None, "real frequencies for selfenergy (uses continuation)"),
    "omega_min": (float, -6.0, None, "spectral grid lower frequency"),
    "omega_max": (float, 10.0, None, "spectral grid upper frequency"),
    "n_omega": (int, 241, _at_least("n_omega", 2), "spectral grid frequency points"),
    "k_min": (float, -3.0, None, "spectral grid lower momentum"),
    "k_max": (float, 3.0, None, "spectral grid upper momentum"),
    "n_k": (int, 121, _at_least("n_k", 1), "spectral grid momentum points"),
    "n_q2": (int, 320, _at_least("n_q2", 4), "q2 nodes in the self-energy"),
    "n_q3": (int, 160, _at_least("n_q3", 4), "q3 nodes in the self-energy"),
    "n_outer": (int, 64, _at_least("n_outer", 4), "outer nodes (perturb, energy)"),
    "n_nu": (int, 24, _at_least("n_nu", 4), "nodes per principal-value panel"),
    "tol": (float, 1e-7, _positive("tol"), "relative tolerance"),
    "output": (str, "-", None, "output path ('-' for stdout)"),
}

REQUIRED = {
    "jump": ("a", "beta", "k"),
    "naive": ("a", "beta", "k"),
    "perturb": ("a", "beta"),
    "selfenergy": ("beta", "k"),
    "spectral": ("beta",),
    "sumrule": ("beta", "k"),
    "energy": ("c",),
    "bethe": ("c",),
    "tba": ("c",),
    "validate": (),
}

SEQUENCING = """\
The perturbative energy is expanded in beta at fixed regulator width a
(beta -> 0 first) and only then is a sent to zero; in that order the 1/a
pieces of the first and second orders cancel. Sweep a with `perturb` at a
small fixed beta to see the cancellation."""


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (t.strip() for t in line.split("=", 1))
            out[key] = value
    return out


class _Parser(argparse.ArgumentParser):
    """argparse reports problems through ConfigError (exit 1) instead of exiting with 2."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    parser = _Parser(
        prog="csduality", description=__doc__.splitlines()[0], epilog=SEQUENCING,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"csduality {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    helps = {
        "jump": "wave-function jump ratio for the smooth regularised potential",
        "naive": "same sweep for the naive regularisation (no jump expected)",
        "perturb": "energy orders e0, e1, e2 versus a at fixed small beta",
        "selfenergy": "second-order self-energy at a Matsubara or real frequency",
        "spectral": "spectral function A(omega, k) on a grid",
        "sumrule": "frequency integral of A(omega, k) per k",
        "energy": "internal energy versus the Yang-Yang solution",
        "bethe": "finite-N Bethe roots and energy versus the perturbative form",
        "tba": "Yang-Yang thermodynamics and its 1/c^2 expansion",
        "validate": "run the invariant suite and print PASS/FAIL lines",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name],
                           epilog=SEQUENCING if name == "perturb" else None)
        p.add_argument("--config", help="flat key = value file; flags override it")
        for key, (_, default, _, desc) in KEYS.items():
            p.add_argument(f"--{key}", dest=key, default=None,
                           help=f"{desc}" + (f" (default {default})" if default is not None else ""))
    return parser


def parse_config(args, file=None):
    """Merge file values and flags into a validated RunConfig.

    Raises ConfigError listing every unknown key, unparsable value,
    missing required key and violated range.
    """
    parser = _build_parser()
    ns = parser.parse_args(list(args))
    if ns.subcommand is None:
        raise ConfigError("a subcommand is required: " + ", ".join(SUBCOMMANDS))
    raw = {}
    path = file or ns.config
    problems = []
    if path:
        raw.update(read_config_file(path))
    problems += [f"unknown key '{k}'" for k in raw if k not in KEYS]
    for key in KEYS:
        val = getattr(ns, key)
        if val is not None:
            raw[key] = val
    params = {}
    for key, (conv, default, check, _) in KEYS.items():
        if key in raw:
            try:
                params[key] = conv(raw[key])
            except ValueError:
                problems.append(f"{key}: cannot parse '{raw[key]}'")
                continue
            if isinstance(params[key], list) and not params[key]:
                problems.append(f"{key}: empty list")
                continue
            if check is not None and (msg := check(params[key])):
                problems.append(msg)
        else:
            params[key] = default
    for key in REQUIRED[ns.subcommand]:
        if key not in raw:
            problems.append(f"missing required key '{key}' for {ns.subcommand}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(ns.subcommand, params)


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


class Table:
    """Ordered rows with a ``converged`` flag; written once at the end."""

    def __init__(self, columns):
        self.columns = list(columns) + ["converged"]
        self.rows = []
        self.failures = []

    def add(self, values, converged=True):
        self.rows.append(list(values) + [bool(converged)])

    def fail(self, lead, exc):
        n_missing = len(self.columns) - 1 - len(lead)
        self.rows.append(list(lead) + [math.nan] * n_missing + [False])
        self.failures.append(f"{type(exc).__name__}: {exc}")

    def render(self, cfg):
        lines = [f"# csduality {__version__} {cfg.subcommand}"]
        lines += [f"# {k} = {_fmt(v)}" for k, v in sorted(cfg.params.items()) if v is not None]
        lines += [f"# failure: {f}" for f in self.failures]
        lines.append("# columns: " + ",".join(self.columns))
        lines.append(",".join(self.columns))
        lines += [",".join(_fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def _emit(cfg, text, path=None):
    path = path or cfg["output"]
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _quad(cfg):
    from .quadrature import QuadratureConfig
    return QuadratureConfig(None, cfg["n_q2"], cfg["n_q3"], cfg["n_outer"], cfg["n_nu"],
                            cfg["eta"], 0.5, cfg["tol"])


def _state(cfg):
    from .thermal import ThermalState
    return ThermalState(cfg["T"], cfg["mu"])


def _guard(table, lead, fn):
    try:
        table.add(list(lead) + list(fn()))
    except CSDualityError as exc:
        table.fail(lead, exc)


# ---------------------------------------------------------------- subcommands


def _run_scatter(cfg, naive):
    from .regulator import PotentialParams, get_regulator
    from .scatter import extract_jump, solve_naive, solve_smooth
    spec = get_regulator(cfg["regulator"])
    table = Table(["a", "beta", "k", "ratio", "jump", "slope", "phase_shift", "fit_residual"])
    solver = solve_naive if naive else solve_smooth
    for a in cfg["a"]:
        for beta in cfg["beta"]:
            for k in cfg["k"]:
                def point(a=a, beta=beta, k=k):
                    w = solver(PotentialParams(a, beta, spec), k)
                    r = extract_jump(w, a, k)
                    return r.ratio, r.jump, r.slope, r.phase_shift, r.residual
                _guard(table, (a, beta, k), point)
    return table


def _run_perturb(cfg):
    from .perturb import RootDensity, e_closed, e_orders
    from .regulator import PotentialParams, get_regulator
    spec = get_regulator(cfg["regulator"])
    rho = RootDensity.thermal(cfg["T"], cfg["mu"])
    quad = _quad(cfg)
    table = Table(["a", "beta", "e0", "e1", "e2", "e_closed", "cancel_residual"])
    for beta in cfg["beta"]:
        closed = e_closed(rho, beta)
        for a in cfg["a"]:
            def point(a=a, beta=beta):
                o = e_orders(rho, PotentialParams(a, beta, spec), quad)
                return o.e0, o.e1, o.e2, closed, o.total - closed
            _guard(table, (a, beta), point)
    return table


def _run_selfenergy(cfg):
    from .manybody import matsubara, retarded_self_energy, self_energy
    s, quad = _state(cfg), _quad(cfg)
    table = Table(["beta", "k", "re_z", "im_z", "re_sigma", "im_sigma"])
    for beta in cfg["beta"]:
        for k in cfg["k"]:
            if cfg["omega"] is None:
                z = 1j * matsubara(cfg["n"], s.T)
                _guard(table, (beta, k, z.real, z.imag),
                       lambda k=k, beta=beta, z=z: _split(self_energy(z, k, s, beta, quad)))
            else:
                for w in cfg["omega"]:
                    _guard(table, (beta, k, w, 0.0),
                           lambda k=k, beta=beta, w=w: _split(retarded_self_energy(
                               w, k, s, beta, quad, cfg["continuation"])))
    return table


def _split(z):
    return z.real, z.imag


def _run_spectral(cfg):
    from .manybody import spectral_grid
    s, quad = _state(cfg), _quad(cfg)
    om = np.linspace(cfg["omega_min"], cfg["omega_max"], cfg["n_omega"])
    ks = np.linspace(cfg["k_min"], cfg["k_max"], cfg["n_k"])
    table = Table(["beta", "omega", "k", "re_sigma", "im_sigma", "a_val"])
    meta = []
    for beta in cfg["beta"]:
        try:
            g = spectral_grid(om, ks, s, beta, quad, cfg["continuation"])
        except CSDualityError as exc:
            table.fail((beta,), exc)
            continue
        meta.append(g.meta)
        for i, k in enumerate(ks):
            for j, w in enumerate(om):
                sig = g.sigma[i, j]
                table.add((beta, w, k, sig.real, sig.imag, g.a_vals[i, j]))
    if cfg["output"] not in (None, "-"):
        sidecar = dict(version=__version__, T=s.T, mu=s.mu, betas=cfg["beta"], eta=quad.eta,
                       continuation=cfg["continuation"], grids=[m for m in meta],
                       omega=[cfg["omega_min"], cfg["omega_max"], cfg["n_omega"]],
                       k=[cfg["k_min"], cfg["k_max"], cfg["n_k"]])
        _emit(cfg, json.dumps(sidecar, indent=1, sort_keys=True, default=float) + "\n",
              cfg["output"] + ".meta.json")
    return table


def _run_sumrule(cfg):
    from .manybody import sum_rule
    s, quad = _state(cfg), _quad(cfg)
    table = Table(["beta", "k", "integral", "deviation"])
    for beta in cfg["beta"]:
        for k in cfg["k"]:
            def point(k=k, beta=beta):
                v = sum_rule(k, s, beta, quad, cfg["continuation"])
                return v, v - 1.0
            _guard(table, (beta, k), point)
    return table


def _run_energy(cfg):
    from .bethe import tba_energy_expansion, yang_yang_solve
    from .manybody import internal_energy_parts
    s, quad = _state(cfg), _quad(cfg)
    table = Table(["c", "beta", "u", "u0", "u1", "u2", "u_yang_yang", "u_expansion", "residual"])
    parts = None
    for c in cfg["c"]:
        def point(c=c):
            nonlocal parts
            if parts is None:
                parts = internal_energy_parts(s, 0.0, quad)
            b = 2.0 / c
            u = parts.u0 + b * parts.u1 + b * b * parts.u2
            yy = yang_yang_solve(s, c).energy_density
            return b, u, parts.u0, parts.u1, parts.u2, yy, tba_energy_expansion(s, c), u - yy
        _guard(table, (c,), point)
    return table


def _default_quantum_numbers(N):
    return [j - 0.5 * (N - 1) for j in range(N)]


def _run_bethe(cfg):
    from .bethe import bethe_energy, bethe_solve
    N, L = cfg["N"], cfg["L"]
    I = cfg["I"] if cfg["I"] is not None else _default_quantum_numbers(N)
    e_inf = sum((2 * math.pi * i / L) ** 2 for i in I)
    D = N / L
    table = Table(["c", "energy", "energy_perturbative", "difference", "bethe_residual", "roots"])
    for c in cfg["c"]:
        def point(c=c):
            st = bethe_solve(N, L, c, I)
            b = 2.0 / c
            pert = (1 - 2 * b * D + 3 * b * b * D * D) * e_inf
            e = bethe_energy(st)
            return e, pert, e - pert, st.residual, list(st.roots)
        _guard(table, (c,), point)
    return table


def _run_tba(cfg):
    from .bethe import tba_energy_expansion, yang_yang_solve
    s = _state(cfg)
    table = Table(["c", "energy_density", "particle_density", "pressure", "energy_expansion",
                   "residual", "yy_residual"])
    for c in cfg["c"]:
        def point(c=c):
            y = yang_yang_solve(s, c, tol=min(cfg["tol"], 1e-10))
            ex = tba_energy_expansion(s, c)
            return (y.energy_density, y.particle_density, y.pressure, ex, ex - y.energy_density,
                    y.residual)
        _guard(table, (c,), point)
    return table


def validation_checks():
    """Fast invariant checks as (name, callable returning bool)."""
    from .bethe import bethe_solve, yang_yang_solve
    from .manybody import ThermalState, self_energy
    from .perturb import divergence_coefficients
    from .regulator import ERF, TANH, PotentialParams, potential_eval
    from .scatter import cs_double_delta, extract_jump, solve_smooth

    s = ThermalState(1.0, 1.0)

    def parseval():
        return all(abs(c1 - c2) <= 1e-8 for c1, c2 in map(divergence_coefficients, (TANH, ERF)))

    def potential_even():
        p = PotentialParams(0.05, 0.5)
        x = np.linspace(0.01, 1, 50)
        return np.allclose(potential_eval(p, x), potential_eval(p, -x), rtol=1e-12, atol=0)

    def jump_ratio():
        w = solve_smooth(PotentialParams(1e-3, 0.5), 1.0)
        return abs(extract_jump(w, 1e-3, 1.0).ratio - 0.5) <= 0.02 * 0.5

    def cs_free_at_beta_equals_a():
        w = cs_double_delta(0.05, 0.05, 1.0)
        return np.allclose(w.psi, np.sin(w.grid) / math.sin(1.0), atol=1e-10)

    def bethe_residual():
        st = bethe_solve(4, 10.0, 5.0, [-1.5, -0.5, 0.5, 1.5])
        return st.residual <= 1e-10 and abs(np.sum(st.roots)) <= 1e-9

    def matsubara_reality():
        z = 0.7 + 0.4j
        return abs(self_energy(z.conjugate(), 1.0, s, 0.5)
                   - self_energy(z, 1.0, s, 0.5).conjugate()) <= 1e-12

    def even_k():
        return abs(self_energy(1j * math.pi, 1.3, s, 0.5) - self_energy(1j * math.pi, -1.3, s, 0.5)) <= 1e-9

    def first_order_exact():
        k = 1.2
        closed = -2 * 0.3 * (_moment(s, 2) + _moment(s, 0) * k * k)
        return abs(self_energy(0.2 + 1j, k, s, 0.3, order=1) - closed) <= 1e-12 * abs(closed)

    def yy_free_limit():
        y = yang_yang_solve(s, 1e6)
        return abs(y.energy_density - _moment(s, 2)) <= 1e-5

    return [("regulator Parseval c1 = c2", parseval), ("potential is even", potential_even),
            ("jump ratio -> beta", jump_ratio), ("double delta free at beta = a", cs_free_at_beta_equals_a),
            ("Bethe residual and momentum", bethe_residual), ("Matsubara reality", matsubara_reality),
            ("self-energy even in k", even_k), ("first-order self-energy exact", first_order_exact),
            ("Yang-Yang free limit", yy_free_limit)]


def _moment(s, m):
    from .manybody import moment_A
    return moment_A(s, m)


def _run_validate(cfg):
    table = Table(["check", "result"])
    for name, fn in validation_checks():
        try:
            ok = bool(fn())
        except CSDualityError as exc:
            ok = False
            table.failures.append(f"{name}: {exc}")
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        table.add((name, "PASS" if ok else "FAIL"), ok)
    return table


RUNNERS = {
    "jump": lambda cfg: _run_scatter(cfg, naive=False),
    "naive": lambda cfg: _run_scatter(cfg, naive=True),
    "perturb": _run_perturb,
    "selfenergy": _run_selfenergy,
    "spectral": _run_spectral,
    "sumrule": _run_sumrule,
    "energy": _run_energy,
    "bethe": _run_bethe,
    "tba": _run_tba,
    "validate": _run_validate,
}


def run(cfg: RunConfig):
    """Execute a parsed configuration; returns the process exit code."""
    table = RUNNERS[cfg.subcommand](cfg)
    if cfg.subcommand != "validate" or cfg["output"] != "-":
        _emit(cfg, table.render(cfg))
    return 0 if all(row[-1] for row in table.rows) else 2


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
