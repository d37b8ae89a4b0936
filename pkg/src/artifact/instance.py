"""Experiment configuration, seeded instance generation and the instance
file format.

An instance file is UTF-8 text: `key = value` header lines, then one line
per atom, `sigma <position> <mass> <f value>` or `omega <position> <mass>
<g value>`, with every number written as an exact rational "num/den".
"""
from dataclasses import dataclass, field, asdict
from fractions import Fraction

import numpy as np

from .haar import FunctionOnAtoms
from .measure_grid import AtomicMeasure, CommonAtom, Grid, MeasurePair

MASS_QUANTUM = 2 ** 16
VALUE_QUANTUM = 2 ** 8


class TooManyAtoms(ValueError):
    pass


class InstanceFormatError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0
    M: int = 6
    L: int = 6
    r: int = 3
    eps: Fraction = Fraction(1, 8)
    tau: int = 4
    n_sigma: int = 16
    n_omega: int = 16
    masses: str = "unit"
    ps: tuple = (1.5, 2.0, 3.0)
    Gamma: float = 4.0
    restarts: int = 8
    iterations: int = 10_000
    tol: float = 1e-10
    intervals: str = "dyadic"
    arithmetic: str = "float"
    adversarial: bool = False

    def __post_init__(self):
        self.eps = Fraction(self.eps)
        if self.tau != self.r + 1:
            raise ValueError("tau must equal r + 1")
        if self.n_sigma < 1 or self.n_omega < 1:
            raise ValueError("atom counts must be at least 1")
        if not all(1 < float(p) < np.inf for p in self.ps):
            raise ValueError("every p must lie in (1, inf)")
        if self.masses not in ("unit", "loguniform"):
            raise ValueError("masses must be 'unit' or 'loguniform'")
        if self.intervals not in ("dyadic", "exhaustive"):
            raise ValueError("intervals must be 'dyadic' or 'exhaustive'")
        if self.arithmetic not in ("float", "rational"):
            raise ValueError("arithmetic must be 'float' or 'rational'")
        self.ps = tuple(float(p) for p in self.ps)
        self.seed = int(self.seed) & (2 ** 64 - 1)

    def grid(self, check=True):
        return Grid(self.M, self.L, self.r, self.eps, self.tau, check=check)


@dataclass
class Instance:
    pair: MeasurePair
    f: np.ndarray
    g: np.ndarray
    meta: dict = field(default_factory=dict)
    f_exact: tuple = ()
    g_exact: tuple = ()

    @property
    def grid(self):
        return self.pair.grid

    def functions(self):
        return (FunctionOnAtoms(self.pair.sigma, self.f), FunctionOnAtoms(self.pair.omega, self.g))


def _quantize(x, q):
    return Fraction(int(round(x * q)), q)


def _mass(rng, kind):
    if kind == "unit":
        return Fraction(1)
    m = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e2))))
    return max(Fraction(1, MASS_QUANTUM), _quantize(m, MASS_QUANTUM))


def gen(cfg):
    """Seeded instance: sigma and omega atoms at centres of distinct level-L
    cells (adversarial mode: quarter points of shared cells)."""
    grid = cfg.grid()
    cells = 1 << grid.L
    ns, nw = cfg.n_sigma, cfg.n_omega
    if cfg.adversarial:
        if ns > cells or nw > cells:
            raise TooManyAtoms(f"at most {cells} atoms per measure")
    elif ns + nw > cells:
        raise TooManyAtoms(f"{ns} + {nw} atoms need distinct cells but only {cells} exist")
    rng = np.random.default_rng(cfg.seed)
    tick = grid.scale
    if cfg.adversarial:
        cs = sorted(rng.choice(cells, ns, replace=False).tolist())
        cw = sorted(rng.choice(cells, nw, replace=False).tolist())
        ps = [(c + Fraction(1, 4)) * tick for c in cs]
        pw = [(c + Fraction(3, 4)) * tick for c in cw]
    else:
        chosen = rng.choice(cells, ns + nw, replace=False).tolist()
        ps = [(c + Fraction(1, 2)) * tick for c in sorted(chosen[:ns])]
        pw = [(c + Fraction(1, 2)) * tick for c in sorted(chosen[ns:])]
    ms = [_mass(rng, cfg.masses) for _ in ps]
    mw = [_mass(rng, cfg.masses) for _ in pw]
    fv = [_quantize(v, VALUE_QUANTUM) for v in rng.normal(size=ns)]
    gv = [_quantize(v, VALUE_QUANTUM) for v in rng.normal(size=nw)]
    meta = {"seed": cfg.seed, "placement": "quarter_points" if cfg.adversarial else "cell_centers",
            "masses": cfg.masses}
    return build(grid, list(zip(ps, ms, fv)), list(zip(pw, mw, gv)), meta)


def build(grid, sigma_atoms, omega_atoms, meta=None, check_cells=True):
    """Instance from (position, mass, value) triples."""
    sigma_atoms = sorted(sigma_atoms)
    omega_atoms = sorted(omega_atoms)
    sig = AtomicMeasure([(x, m) for x, m, _ in sigma_atoms])
    om = AtomicMeasure([(x, m) for x, m, _ in omega_atoms])
    pair = MeasurePair(sig, om, grid, check_cells=check_cells)
    fe = tuple(Fraction(v) for _, _, v in sigma_atoms)
    ge = tuple(Fraction(v) for _, _, v in omega_atoms)
    return Instance(pair, np.array([float(v) for v in fe]), np.array([float(v) for v in ge]),
                    dict(meta or {}), fe, ge)


def _q(x):
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def dumps(inst, instance_id=None):
    g = inst.grid
    head = {"format": "artifact-instance-1", "M": g.M, "L": g.L, "r": g.r, "eps": _q(g.eps),
            "tau": g.tau}
    if instance_id is not None:
        head["instance_id"] = instance_id
    for k, v in sorted(inst.meta.items()):
        head.setdefault(k, v)
    lines = [f"{k} = {v}" for k, v in head.items()]
    for name, mu, vals in (("sigma", inst.pair.sigma, inst.f_exact),
                           ("omega", inst.pair.omega, inst.g_exact)):
        for x, m, v in zip(mu.positions, mu.masses, vals):
            lines.append(f"{name} {_q(x)} {_q(m)} {_q(v)}")
    return "\n".join(lines) + "\n"


def _parse_q(tok):
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError) as e:
        raise InstanceFormatError(f"bad rational {tok!r}") from e


def loads(text, check_cells=False):
    """Parse an instance; raises InstanceFormatError on malformed input and
    CommonAtom when the measures share a point."""
    head, sig, om = {}, [], []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            head[k] = v
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] not in ("sigma", "omega"):
            raise InstanceFormatError(f"line {n}: expected '<sigma|omega> x mass value'")
        x, m, v = (_parse_q(t) for t in parts[1:])
        (sig if parts[0] == "sigma" else om).append((x, m, v))
    try:
        grid = Grid(int(head["M"]), int(head["L"]), int(head.get("r", 3)),
                    Fraction(head.get("eps", "1/8")), int(head["tau"]) if "tau" in head else None,
                    check=False)
    except KeyError as e:
        raise InstanceFormatError(f"missing header {e}") from e
    meta = {k: v for k, v in head.items() if k not in ("M", "L", "r", "eps", "tau", "format")}
    try:
        return build(grid, sig, om, meta, check_cells=check_cells)
    except CommonAtom:
        raise
    except ValueError as e:
        raise InstanceFormatError(str(e)) from e


def config_dict(cfg):
    d = asdict(cfg)
    d["eps"] = _q(cfg.eps)
    d["ps"] = list(cfg.ps)
    return d


def _tiny(M, sigma, omega, name):
    grid = Grid(M, M, check=False)
    one = Fraction(1)
    return build(grid, [(Fraction(x), Fraction(m), one) for x, m in sigma],
                 [(Fraction(x), Fraction(m), one) for x, m in omega], {"canonical": name},
                 check_cells=False)


# (name, M, sigma atoms, omega atoms, expected values with f = g = 1)
CANONICAL = (
    ("single_pair", 3, [("1/2", 1)], [("3/2", 1)],
     {"norm_p2": 1.0, "tailed_scalar_p2": 2 / 3, "wbp_p2_at_least": 1.0}),
    ("two_sigma", 2, [("1/2", 1), ("5/2", 1)], [("3/2", 1)],
     {"norm_p2": 2 ** 0.5, "scalar_local_p2": 1.0}),
    ("energy_pair", 2, [("1/2", 1)], [("9/4", 1), ("11/4", 1)],
     {"energy_pp_p2": Fraction(1, 648)}),
    ("flat_forest", 2, [("5/4", 1)], [("1/4", 1), ("9/4", 1)],
     {"forest_tops_gamma10": 1}),
    ("single_kernel", 2, [("1/2", 1)], [("9/4", 1)],
     {"bilinear": Fraction(-4, 7)}),
    ("hilbert_point", 2, [("5/2", 1)], [("1/2", 1)],
     {"bilinear": Fraction(1, 2)}),
)


def canonical_instances():
    """[(name, instance, expected)] for the tiny hand-checked configurations."""
    return [(name, _tiny(M, s, w, name), exp) for name, M, s, w, exp in CANONICAL]
