"""Command line: gen, report, verify, sweep and search.

Exit codes: 0 ok, 1 invariant or guard violation, 2 input error, 3 budget
exceeded.
"""
import argparse
import csv
import hashlib
import io
import json
import sys
import time
from fractions import Fraction

import numpy as np

from . import characteristics as ch
from .corona import GammaTooSmall, build_cz_energy_forest
from .forms import decompose
from .instance import (ExperimentConfig, InstanceFormatError, TooManyAtoms, build,
                       canonical_instances, dumps, gen, loads)
from .measure_grid import CommonAtom, Grid, InvalidGrid, OutOfGrid
from .suite import (Finding, canonical_findings, characteristic_reports, load_guards,
                    verify_instance)

OK, VIOLATION, INPUT_ERROR, BUDGET = 0, 1, 2, 3
CSV_COLUMNS = ("instance_id", "p", "name", "value", "mode", "witness_digest", "runtime_ms")
AXES = ("p", "Gamma", "eps", "atoms")
OBJECTIVES = ("norm_over_charsum", "energy_over_testing")


class InputError(ValueError):
    pass


# -- config flags -----------------------------------------------------------------
def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _add_config(ap):
    g = ap.add_argument_group("experiment config")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--M", type=int, default=6)
    g.add_argument("--L", type=int, default=6)
    g.add_argument("--r", type=int, default=3)
    g.add_argument("--eps", default="1/8")
    g.add_argument("--tau", type=int, default=None, help="defaults to r + 1")
    g.add_argument("--n-sigma", type=int, default=16)
    g.add_argument("--n-omega", type=int, default=16)
    g.add_argument("--masses", choices=("unit", "loguniform"), default="unit")
    g.add_argument("--ps", type=_floats, default=(1.5, 2.0, 3.0), help="comma separated")
    g.add_argument("--Gamma", type=float, default=4.0)
    g.add_argument("--restarts", type=int, default=8)
    g.add_argument("--iterations", type=int, default=10_000)
    g.add_argument("--tol", type=float, default=1e-10)
    g.add_argument("--intervals", choices=("dyadic", "exhaustive"), default="dyadic")
    g.add_argument("--arithmetic", choices=("float", "rational"), default="float")
    g.add_argument("--adversarial", action="store_true")


def config_from(args, **over):
    kw = dict(seed=args.seed, M=args.M, L=args.L, r=args.r, eps=Fraction(args.eps),
              tau=args.r + 1 if args.tau is None else args.tau, n_sigma=args.n_sigma,
              n_omega=args.n_omega, masses=args.masses, ps=args.ps, Gamma=args.Gamma,
              restarts=args.restarts, iterations=args.iterations, tol=args.tol,
              intervals=args.intervals, arithmetic=args.arithmetic, adversarial=args.adversarial)
    kw.update(over)
    try:
        return ExperimentConfig(**kw)
    except (ValueError, ZeroDivisionError) as e:
        raise InputError(str(e)) from e


# -- serialisation helpers ------------------------------------------------------------
def _num(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _canon(obj):
    """JSON-ready, order-stable form of a witness."""
    if obj is None or isinstance(obj, (str, bool)):
        return obj
    if isinstance(obj, tuple) and len(obj) == 2 and all(isinstance(v, (int, np.integer)) for v in obj) \
            and type(obj).__name__ == "DyadicInterval":
        return f"D({obj.k},{obj.n})"
    if isinstance(obj, (Fraction, int, float, np.integer, np.floating)):
        return _num(obj)
    if isinstance(obj, dict):
        return {str(_canon(k)): _canon(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_canon(v) for v in obj]
    return str(obj)


def witness_digest(w):
    if w is None:
        return ""
    text = json.dumps(_canon(w), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _read_instance(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _csv_text(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def canonical_sort(rows):
    return sorted(rows, key=lambda r: (r.get("_key", ()), r["instance_id"], float(r["p"]), r["name"]))


# -- report ---------------------------------------------------------------------------
def compute_report(inst, cfg, instance_id="instance"):
    """(report text, csv rows).  The text holds no timings, so reruns match byte
    for byte; runtime_ms only goes to the CSV."""
    pair = inst.pair
    lines = ["format = artifact-report-1", f"instance_id = {instance_id}",
             f"grid = M={inst.grid.M} L={inst.grid.L} r={inst.grid.r} eps={_num(inst.grid.eps)} "
             f"tau={inst.grid.tau}",
             f"atoms = sigma:{len(pair.sigma)} omega:{len(pair.omega)}",
             f"arithmetic = {cfg.arithmetic}", f"restarts = {cfg.restarts}", f"seed = {cfg.seed}", ""]
    rows = []
    for p in cfg.ps:
        t0 = time.perf_counter()
        reps = characteristic_reports(pair, p, cfg.restarts, cfg.seed, cfg.iterations, cfg.tol,
                                      cfg.intervals)
        per = (time.perf_counter() - t0) * 1000 / max(1, len(reps))
        for name in sorted(reps):
            rep = reps[name]
            dig = witness_digest(rep.witness)
            flags = ",".join(rep.flags) or "-"
            lines.append(f"char {name} p={_num(p)} value={_num(rep.value)} mode={rep.mode} "
                         f"witness={dig or '-'} flags={flags}")
            rows.append({"instance_id": instance_id, "p": _num(p), "name": name,
                         "value": _num(rep.value), "mode": rep.mode, "witness_digest": dig,
                         "runtime_ms": f"{per:.3f}"})
        lines.extend(_norm_lines(pair, p, cfg))
        lines.append("")
    lines.extend(_forms_block(inst, cfg))
    return "\n".join(lines) + "\n", rows


def _norm_lines(pair, p, cfg):
    out = []
    methods = ["ascent"] + (["exact_p2"] if p == 2 else []) + (["brute_small"] if len(pair.sigma) <= 3 else [])
    for m in methods:
        rep = ch.operator_norm(pair, p, m, restarts=cfg.restarts, seed=cfg.seed)
        out.append(f"norm method={m} p={_num(p)} value={_num(rep.value)} mode={rep.mode}")
    return out


def _forms_block(inst, cfg):
    pair = inst.pair
    if len(pair.sigma) == 0 or len(pair.omega) == 0:
        return ["forms skipped = empty measure"]
    exact = cfg.arithmetic == "rational"
    p0 = cfg.ps[0]
    forest = build_cz_energy_forest(pair, inst.f, p0, cfg.Gamma)
    f = list(inst.f_exact) if exact else inst.f
    g = list(inst.g_exact) if exact else inst.g
    out = [f"forest p={_num(p0)} Gamma={_num(cfg.Gamma)} tops=" +
           " ".join(f"({F.k},{F.n})" for F in forest.tops)]
    for F in forest.tops:
        out.append(f"alpha ({F.k},{F.n}) {_num(forest.alpha.get(F, 0.0))}")
    for project in (True, False):
        dec = decompose(pair, f, g, forest, exact=exact, project=project)
        tag = "projected" if project else "unprojected"
        out.append(f"forms {tag} mode={dec.mode} total={_num(dec.total)} "
                   f"projection_gap={_num(dec.projection_gap)}")
        for k in sorted(dec.forms):
            out.append(f"  form {k} {_num(dec.forms[k])}")
        for k in sorted(dec.residuals):
            out.append(f"  residual {k} {_num(dec.residuals[k])}")
    return out


# -- verify ---------------------------------------------------------------------------
def run_verify(items, cfg, guards, budget=None, uniqueness=True):
    """items: [(label, instance or exception, expected or None)] -> (code, lines)."""
    t0 = time.perf_counter()
    lines, failed = [], False
    for label, inst, expected in items:
        lines.append(f"instance {label}")
        if isinstance(inst, CommonAtom):
            lines.append(Finding("common_atom", False, detail=str(inst)).line())
            failed = True
            continue
        found = []
        if expected:
            found += canonical_findings(label, inst, expected)
        found += verify_instance(inst, cfg, guards, uniqueness=uniqueness)
        for fd in found:
            lines.append(fd.line())
            failed = failed or not fd.ok
        if budget is not None and time.perf_counter() - t0 > budget:
            lines.append(f"budget of {budget} s exceeded")
            return BUDGET, lines
    bad = [ln for ln in lines if ln.startswith("FAIL")]
    lines.append(f"summary: {len(bad)} failing checks")
    return (VIOLATION if failed else OK), lines


# -- sweep ----------------------------------------------------------------------------
def sweep_rows(cfg, axis, values, instances, shard=(0, 1), timing=True):
    k, n = shard
    rows = []
    for i in range(instances):
        if i % n != k:
            continue
        seed = cfg.seed + i
        for v in values:
            t0 = time.perf_counter()
            p, name, value, mode, wit = _sweep_point(cfg, seed, axis, v)
            ms = (time.perf_counter() - t0) * 1000 if timing else 0.0
            rows.append({"_key": (seed, float(v)),
                         "instance_id": f"seed={seed}:{axis}={_num(v)}", "p": _num(p), "name": name,
                         "value": _num(value), "mode": mode, "witness_digest": witness_digest(wit),
                         "runtime_ms": f"{ms:.3f}"})
    return canonical_sort(rows)


def _sweep_point(cfg, seed, axis, v):
    p = cfg.ps[0]
    if axis == "p":
        inst = gen(config_with(cfg, seed=seed))
        rep = ch.testing(inst.pair, float(v), "quad_global", restarts=cfg.restarts, seed=seed,
                         maxiter=cfg.iterations, tol=cfg.tol)
        return float(v), rep.name, rep.value, rep.mode, rep.witness
    if axis == "Gamma":
        inst = gen(config_with(cfg, seed=seed))
        forest = build_cz_energy_forest(inst.pair, inst.f, p, float(v))
        return p, "forest_size", len(forest.tops), ch.EXACT, [(F.k, F.n) for F in forest.tops]
    if axis == "eps":
        # decimal reading of the value: 0.05 -> 1/20, not the nearest double
        grid = Grid(cfg.M, cfg.L, cfg.r, Fraction(repr(float(v))), cfg.tau)
        good = len(grid.good_set)
        return p, "good_fraction", good / len(grid.all_intervals()), ch.EXACT, None
    if axis == "atoms":
        inst = gen(config_with(cfg, seed=seed, n_sigma=int(v), n_omega=int(v)))
        method = "exact_p2" if p == 2 else "ascent"
        rep = ch.operator_norm(inst.pair, p, method, restarts=cfg.restarts, seed=seed)
        return p, "norm", rep.value, rep.mode, rep.witness
    raise ValueError(f"unknown axis {axis!r}")


def config_with(cfg, **over):
    d = dict(cfg.__dict__)
    d.update(over)
    return ExperimentConfig(**d)


# -- search ---------------------------------------------------------------------------
def objective(inst, name, p, restarts=4, seed=0):
    pair = inst.pair
    if name == "norm_over_charsum":
        method = "exact_p2" if p == 2 else "ascent"
        num = ch.operator_norm(pair, p, method, restarts=restarts, seed=seed).value
        den = sum(ch.testing(pair, p, "scalar_local", s).value for s in ("forward", "dual"))
        den += sum(ch.muckenhoupt(pair, p, "tailed_scalar", s).value for s in ("forward", "dual"))
    elif name == "energy_over_testing":
        num = ch.energy_characteristic(pair, p).value
        den = ch.testing(pair, p, "scalar_local").value
    else:
        raise ValueError(f"unknown objective {name!r}")
    if num == 0:
        return 0.0
    return float(num / den) if den > 0 else float("inf")


def _mutate(inst, rng, adversarial):
    """Move one atom to a free neighbouring cell or rescale its mass."""
    grid = inst.grid
    side = int(rng.integers(2))
    mu = inst.pair.sigma if side == 0 else inst.pair.omega
    vals = inst.f_exact if side == 0 else inst.g_exact
    atoms = list(zip(mu.positions, mu.masses, vals))
    other = inst.pair.omega if side == 0 else inst.pair.sigma
    t = int(rng.integers(len(atoms)))
    x, m, v = atoms[t]
    if rng.random() < 0.5:
        m = max(Fraction(1, 2 ** 16), Fraction(round(float(m) * float(np.exp(rng.normal(0, 0.7))) * 2 ** 16),
                                                2 ** 16))
    else:
        cell = int(x / grid.scale) + int(rng.choice([-1, 1]))
        off = x / grid.scale - int(x / grid.scale)
        if not 0 <= cell < (1 << grid.L):
            return None
        used = {int(y / grid.scale) for y in mu.positions}
        if not adversarial:
            used |= {int(y / grid.scale) for y in other.positions}
        if cell in used:
            return None
        x = (cell + off) * grid.scale
    atoms[t] = (x, m, v)
    sig = atoms if side == 0 else list(zip(inst.pair.sigma.positions, inst.pair.sigma.masses, inst.f_exact))
    om = atoms if side == 1 else list(zip(inst.pair.omega.positions, inst.pair.omega.masses, inst.g_exact))
    try:
        return build(grid, sig, om, inst.meta)
    except (CommonAtom, ValueError):
        return None


def hill_climb(cfg, name, budget, p=None):
    """Seeded random-restart hill climbing; returns (best instance, best value,
    trace of best-so-far after every evaluation)."""
    if budget < 1:
        raise InputError("budget must be positive")
    p = cfg.ps[0] if p is None else p
    rng = np.random.default_rng([cfg.seed, 31337])
    restarts = max(1, cfg.restarts)
    per = max(1, budget // restarts)
    best, best_val, trace = None, -np.inf, []
    used = 0
    r = 0
    while used < budget:
        cur = gen(config_with(cfg, seed=cfg.seed + 1000003 * r))
        cur_val = objective(cur, name, p, seed=cfg.seed)
        used += 1
        if cur_val > best_val:
            best, best_val = cur, cur_val
        trace.append(best_val)
        steps = 0
        while used < budget and steps < per - 1:
            cand = _mutate(cur, rng, cfg.adversarial)
            steps += 1
            if cand is None:
                continue
            val = objective(cand, name, p, seed=cfg.seed)
            used += 1
            if val > cur_val:
                cur, cur_val = cand, val
            if cur_val > best_val:
                best, best_val = cur, cur_val
            trace.append(best_val)
        r += 1
    return best, best_val, trace


# -- entry point ----------------------------------------------------------------------
def _parser():
    ap = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="write a seeded instance file")
    _add_config(p)
    p.add_argument("-o", "--out", default="-")

    p = sub.add_parser("report", help="characteristics, norms and forms of an instance")
    _add_config(p)
    p.add_argument("instance")
    p.add_argument("-o", "--out", default="-")
    p.add_argument("--csv", default=None)

    p = sub.add_parser("verify", help="exact invariants and regression guards")
    _add_config(p)
    p.add_argument("instances", nargs="*")
    p.add_argument("--canonical", action="store_true", help="the built-in tiny instances")
    p.add_argument("--guards", default=None, help="guard file (packaged calibration by default)")
    p.add_argument("--budget", type=float, default=None, help="seconds")
    p.add_argument("--no-uniqueness", action="store_true")
    p.add_argument("-o", "--out", default="-")

    p = sub.add_parser("sweep", help="one CSV row per axis value per instance")
    _add_config(p)
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--values", type=_floats, default=())
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--shard", default="0/1", help="k/n: instances with index = k mod n")
    p.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0")
    p.add_argument("-o", "--out", default="-")

    p = sub.add_parser("search", help="hill climbing on an objective ratio")
    _add_config(p)
    p.add_argument("--objective", choices=OBJECTIVES, required=True)
    p.add_argument("--budget", type=int, required=True, help="objective evaluations")
    p.add_argument("-o", "--out", default="-", help="best instance")
    p.add_argument("--trace", default=None, help="trace CSV (step,best)")
    return ap


def main(argv=None):
    ap = _parser()
    args = ap.parse_args(argv)
    try:
        return _dispatch(args)
    except (TooManyAtoms, InstanceFormatError, InvalidGrid, OutOfGrid, OSError, InputError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return INPUT_ERROR
    except GammaTooSmall as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return BUDGET


def _dispatch(args):
    cfg = config_from(args)
    if args.cmd == "gen":
        _write(args.out, dumps(gen(cfg), instance_id=f"seed={cfg.seed}"))
        return OK
    if args.cmd == "report":
        try:
            inst = _read_instance(args.instance)
        except CommonAtom as e:
            print(f"violation: {e}", file=sys.stderr)
            return VIOLATION
        text, rows = compute_report(inst, cfg, inst.meta.get("instance_id", args.instance))
        _write(args.out, text)
        if args.csv:
            _write(args.csv, _csv_text(rows))
        return OK
    if args.cmd == "verify":
        items = []
        if args.canonical:
            items += [(n, i, e) for n, i, e in canonical_instances()]
        for path in args.instances:
            try:
                items.append((path, _read_instance(path), None))
            except CommonAtom as e:
                items.append((path, e, None))
        if not items:
            print("input error: nothing to verify", file=sys.stderr)
            return INPUT_ERROR
        guards = load_guards(args.guards)
        code, lines = run_verify(items, cfg, guards, args.budget, not args.no_uniqueness)
        _write(args.out, "\n".join(lines) + "\n")
        return code
    if args.cmd == "sweep":
        try:
            k, n = (int(t) for t in args.shard.split("/"))
        except ValueError as e:
            raise InputError("shard must be k/n") from e
        if not 0 <= k < n:
            raise InputError("shard must be k/n with 0 <= k < n")
        rows = sweep_rows(cfg, args.axis, args.values, args.instances, (k, n), not args.no_timing)
        _write(args.out, _csv_text(rows))
        return OK
    if args.cmd == "search":
        best, val, trace = hill_climb(cfg, args.objective, args.budget)
        _write(args.out, dumps(best, instance_id=f"search:{args.objective}:seed={cfg.seed}"))
        if args.trace:
            _write(args.trace, "step,best\n" + "".join(f"{i},{_num(v)}\n" for i, v in enumerate(trace)))
        print(f"best {args.objective} = {_num(val)} after {len(trace)} evaluations", file=sys.stderr)
        return OK
    raise AssertionError(args.cmd)


if __name__ == "__main__":
    sys.exit(main())
