"""Batch experiment runner.

Each subcommand reads its options from an optional flat ``key = value``
config file (``--config``), overridden by flags of the same name, writes
its artifacts (CSV tables, JSON reports) into ``--out`` and always leaves a
``manifest.json`` beside them.  Exit codes: 0 pass, 1 a check failed,
2 usage or input error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

from . import __version__, flags, reps, rigidity, spectra
from .errors import CheckFailed, HitchinError, InputError
from .words import Word, enumerate_classes, schema_an_b, schema_family

PRECISION_ENV = "HITCHIN_PRECISION"


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (type, default, help)
KEYS = {
    "preset": (str, "punctured-torus", "punctured-torus or schottky"),
    "rep": (str, None, "path of a serialized representation (overrides preset)"),
    "dim": (int, 3, "dimension of the tau_d lift of the preset"),
    "eps": (float, 0.0, "perturbation size applied to the representation"),
    "seed": (int, None, "random seed (required by randomized commands)"),
    "precision": (str, None, "double or extended"),
    "workers": (int, 1, "worker threads for estimator loops"),
    "lam": (float, 3.0, "schottky: first translation factor"),
    "mu": (float, 3.0, "schottky: second translation factor"),
    "axis": (str, "1,2", "schottky: fixed points of the second generator"),
    "max_len": (int, 4, "maximal word length of enumerated classes"),
    "oriented": (_bool, True, "enumerate oriented classes"),
    "schema": (int, None, "use a^n b for n = 0..schema instead of enumeration "
                          "(rank: also b^n a, a^n B, b^n A)"),
    "alpha": (str, "a", "first word"),
    "beta": (str, "b", "second word"),
    "delta": (str, "baB", "third word"),
    "word": (str, "ab", "word whose spectrum is scanned"),
    "n_min": (int, 8, "first exponent of the expansion range"),
    "n_max": (int, 40, "last exponent of the expansion range"),
    "count": (int, 20, "number of sampled configurations"),
    "tuple_len": (int, 2, "number of interior flags in sampled positive tuples"),
    "sigma": (str, "dual", "hilbert3 comparison: self, dual or perturb"),
    "sigma_dim": (int, None, "intersect: lift dimension of the second representation"),
    "T": (float, 6.0, "length cutoff for growth estimators"),
    "max_degree": (int, 4, "resonance: maximal total degree"),
    "tol": (float, 1e-9, "check tolerance"),
    "tamper": (float, 1.1, "reconstruct: factor applied to one ratio in the tamper check"),
    "out": (str, ".", "output directory"),
}

COMMANDS = {
    "gen-rep": ["preset", "rep", "dim", "eps", "seed", "lam", "mu", "axis"],
    "spectra": ["preset", "rep", "dim", "eps", "seed", "lam", "mu", "axis", "max_len", "oriented", "schema"],
    "expand": ["preset", "rep", "dim", "eps", "seed", "lam", "mu", "axis", "alpha", "beta", "n_min", "n_max",
               "precision", "tol"],
    "positivity": ["dim", "seed", "count", "tuple_len"],
    "transversality": ["dim", "seed", "count"],
    "reconstruct": ["preset", "rep", "dim", "eps", "seed", "lam", "mu", "axis", "alpha", "beta", "delta", "tol",
                    "tamper"],
    "rank": ["preset", "rep", "dim", "eps", "seed", "lam", "mu", "axis", "max_len", "schema", "workers", "tol"],
    "intersect": ["preset", "rep", "dim", "eps", "seed", "lam", "mu", "axis", "T", "max_len", "sigma_dim",
                  "workers"],
    "hilbert3": ["preset", "rep", "dim", "eps", "seed", "lam", "mu", "axis", "alpha", "beta", "n_min", "n_max",
                 "sigma", "precision", "tol"],
    "resonance": ["preset", "rep", "dim", "eps", "seed", "lam", "mu", "axis", "word", "max_degree", "tol"],
}

RANDOMIZED = {"positivity", "transversality"}


def read_config(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hitchin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, keys in COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="flat key = value file")
        for key in keys + ["out"]:
            _, default, text = KEYS[key]
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                           help=f"{text} (default {default})")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then environment, then config file, then flags."""
    keys = COMMANDS[args.command] + ["out"]
    cfg = {k: KEYS[k][1] for k in keys}
    if "precision" in cfg:
        cfg["precision"] = os.environ.get(PRECISION_ENV, "double")
    if args.config:
        for k, v in read_config(args.config).items():
            if k not in cfg:
                raise InputError(f"unknown config key {k!r} for {args.command}")
            cfg[k] = v
    for k in keys:
        v = getattr(args, k)
        if v is not None:
            cfg[k] = v
    for k in keys:
        typ = KEYS[k][0]
        if cfg[k] is not None and not isinstance(cfg[k], typ if typ is not _bool else bool):
            try:
                cfg[k] = typ(cfg[k])
            except ValueError as exc:
                raise InputError(f"bad value for {k}: {exc}") from None
    if cfg.get("precision") not in (None, "double", "extended"):
        raise InputError(f"precision must be double or extended, not {cfg['precision']!r}")
    needs_seed = args.command in RANDOMIZED or (cfg.get("eps") or 0) > 0
    if needs_seed and cfg.get("seed") is None:
        raise InputError(f"{args.command} needs --seed")
    return cfg


def load_rep(cfg: dict) -> reps.Representation:
    if cfg.get("rep"):
        try:
            text = Path(cfg["rep"]).read_text()
        except OSError as exc:
            raise InputError(f"cannot read representation file: {exc}") from None
        rep = reps.deserialize(text)
    else:
        if cfg["preset"] == "punctured-torus":
            base = reps.punctured_torus_preset()
        elif cfg["preset"] == "schottky":
            p, q = (float(x) for x in cfg["axis"].split(","))
            base = reps.schottky_preset(cfg["lam"], cfg["mu"], (p, q))
        else:
            raise InputError(f"unknown preset {cfg['preset']!r}")
        rep = base if cfg["dim"] == 2 else reps.lift_rep(base, cfg["dim"])
    if cfg.get("eps"):
        rep = reps.perturb(rep, cfg["eps"], cfg["seed"])
    return rep


def _classes(cfg, rep, family: bool = False):
    if cfg.get("schema") is not None:
        if family:
            return schema_family(cfg["schema"], rep.rank)
        return [schema_an_b(n, rank=rep.rank) for n in range(cfg["schema"] + 1)]
    return [c.representative for c in enumerate_classes(rep.rank, cfg["max_len"], cfg.get("oriented", True))]


# --- subcommands: each returns ({filename: text}, passed, extra manifest fields) ---


def cmd_gen_rep(cfg):
    rep = load_rep(cfg)
    return {"rep.json": reps.serialize(rep)}, True, {}


def cmd_spectra(cfg):
    rep = load_rep(cfg)
    rows, skipped = [], []
    for w in _classes(cfg, rep):
        try:
            rows.append(spectra.spectrum(rep, w))
        except (spectra.NotRealSplit, spectra.ModulusCollision):
            skipped.append(str(w))
    return {"spectra.csv": spectra.spectrum_csv(rows)}, True, {"rows": len(rows), "skipped": skipped}


def cmd_expand(cfg):
    rep = load_rep(cfg)
    fit = spectra.expansion_estimate(rep, cfg["alpha"], cfg["beta"], (cfg["n_min"], cfg["n_max"]), cfg["precision"])
    err = fit.rel_errors()
    passed = {"b11": err["b11"] <= 1e-6, "z": err["z"] <= 1e-4}
    metrics = {
        "b11_est": fit.b11_est, "c2_est": fit.c2_est, "z_est": fit.z_est,
        "b11": fit.b11, "c2": fit.c2, "z": fit.z, "rel_errors": err,
    }
    report = rigidity.render_report("expand", _inputs(cfg), metrics, passed)
    return {"expand.csv": spectra.expansion_csv(fit), "expand.json": report}, all(passed.values()), {}


def _quadruple_rows(cfg, audit):
    lines, ok = [], True
    for k in range(cfg["count"]):
        seed = cfg["seed"] + k
        row, good = audit(k, seed)
        lines.append(",".join(spectra.fmt(x) for x in row))
        ok &= good
    return lines, ok


def cmd_positivity(cfg):
    d = cfg["dim"]

    def audit(k, seed):
        w = flags.generate_positive_tuple(seed, cfg["tuple_len"], d)
        positive = flags.is_positive_tuple(w.flags)
        a, b = w.flags[0], w.flags[-1]
        x, y = w.flags[1], w.flags[2] if len(w.flags) > 3 else w.flags[-1]
        M = flags.cross_matrix(flags.pair_frame(a, b), flags.pair_frame(x, y))
        minors = [abs(v) / t for _, v, t in flags._all_minors(M)]
        N = flags.sign_normalize_tp(M)
        tp = N is not None and flags.is_totally_positive(N)
        good = positive and tp and min(minors) > 1
        return [k, seed, d, positive, min(minors), tp, good], good

    lines, ok = _quadruple_rows(cfg, audit)
    head = "index,seed,dim,positive_tuple,min_minor_over_tol,cross_tp,pass"
    return {"positivity.csv": "\n".join([head, *lines]) + "\n"}, ok, {}


def cmd_transversality(cfg):
    d = cfg["dim"]

    def audit(k, seed):
        w = flags.generate_positive_tuple(seed, 2, d)
        a, x, y, b = w.flags
        s = flags.lines_in_general_position(flags.pair_frame(a, b), flags.pair_frame(x, y))
        good = s > 1e-8
        return [k, seed, d, s, good], good

    lines, ok = _quadruple_rows(cfg, audit)
    head = "index,seed,dim,min_singular_value,pass"
    return {"transversality.csv": "\n".join([head, *lines]) + "\n"}, ok, {}


def cmd_reconstruct(cfg):
    rep = load_rep(cfg)
    words = [cfg["alpha"], cfg["beta"], cfg["delta"]]
    mats = [rep(Word.parse(w, rep.rank)) for w in words]
    inv = rigidity.triple_invariants_from_matrices(*mats)
    rt = rigidity.round_trip(mats, inv)
    tampered = rigidity.round_trip(mats, inv.tampered((rep.dim - 1, 0, rep.dim - 1), cfg["tamper"]))
    metrics = {
        "crosscheck": inv.crosscheck,
        "conjugator_residual": rt.conjugator_residual,
        "invariant_residual": rt.invariant_residual,
        "tampered_residual": tampered.residual,
    }
    passed = {
        "round_trip": rt.residual <= cfg["tol"] * 10,
        "crosscheck": inv.crosscheck <= 1e-9,
        "tamper_detected": tampered.residual > 1e-3,
    }
    report = rigidity.render_report("reconstruct", _inputs(cfg), metrics, passed)
    return {"reconstruct.json": report}, all(passed.values()), {}


def cmd_rank(cfg):
    rep = load_rep(cfg)
    classes = _classes(cfg, rep, family=True)
    JL = rigidity.length_jacobian(rep, classes, "length", workers=cfg["workers"])
    JT = rigidity.length_jacobian(rep, classes, "trace", workers=cfg["workers"])
    metrics = rigidity.kernel_rank_report(JL, JT, tol=1e-3)
    expected = rep.dim**2 - 1
    passed = {
        "rank": JL.rank == expected,
        "gap": JL.gap_ratio >= rigidity.GAP_RATIO,
        "kernels": metrics["kernels_agree"],
    }
    metrics["expected_rank"] = expected
    metrics["classes"] = list(JL.classes)
    report = rigidity.render_report("rank", _inputs(cfg), metrics, passed)
    return {"rank.json": report}, all(passed.values()), {}


def cmd_intersect(cfg):
    rho = load_rep(cfg)
    if cfg.get("sigma_dim"):
        if rho.dim != 2:
            raise InputError("sigma_dim needs a 2-dimensional base representation")
        sigma = reps.lift_rep(rho, cfg["sigma_dim"])
    else:
        sigma = rho
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        h = spectra.entropy_estimate(rho, cfg["T"], cfg["max_len"], cfg["workers"])
        i = spectra.intersection_estimate(rho, sigma, cfg["T"], cfg["max_len"], cfg["workers"])
        n = len(spectra.ball(rho, cfg["T"], cfg["max_len"], cfg["workers"]))
    metrics = {
        "entropy": h,
        "intersection": i,
        "ball_size": n,
        "coverage_warnings": sorted({str(w.message) for w in caught}),
    }
    report = rigidity.render_report("intersect", _inputs(cfg), metrics, {"coverage": not caught})
    return {"intersect.json": report}, True, {}


def cmd_hilbert3(cfg):
    rho = load_rep(cfg)
    if cfg["sigma"] == "self":
        sigma = rho
    elif cfg["sigma"] == "dual":
        sigma = reps.contragredient(rho)
    elif cfg["sigma"] == "perturb":
        if cfg.get("seed") is None:
            raise InputError("sigma = perturb needs --seed")
        sigma = reps.perturb(rho, 0.01, cfg["seed"] + 1)
    else:
        raise InputError("sigma must be self, dual or perturb")
    rep = spectra.hilbert_expansion_d3(rho, sigma, cfg["alpha"], cfg["beta"], (cfg["n_min"], cfg["n_max"]),
                                       cfg["precision"])
    tol = max(cfg["tol"], 1e-10)
    agree = rep.leading_delta <= tol and rep.rates != "mismatch" and rep.sequence_delta <= tol
    passed = {"positive_coefficients": rep.positive_coefficients}
    if cfg["sigma"] == "perturb":
        passed["separated"] = rep.leading_delta > 1e-4
    else:
        passed["agreement"] = agree
    report = rigidity.render_report("hilbert3", _inputs(cfg), rep.metrics(), passed)
    return {"hilbert3.json": report}, all(passed.values()), {}


def cmd_resonance(cfg):
    rep = load_rep(cfg)
    s = spectra.spectrum(rep, cfg["word"])
    rel = spectra.resonance_scan(s.eigenvalues, cfg["max_degree"], cfg["tol"])
    metrics = {"eigenvalues": s.eigenvalues, "relations": [{"m": list(m), "j": j} for m, j in rel]}
    report = rigidity.render_report("resonance", _inputs(cfg), metrics, {"scanned": True})
    return {"resonance.json": report}, True, {}


HANDLERS = {
    "gen-rep": cmd_gen_rep,
    "spectra": cmd_spectra,
    "expand": cmd_expand,
    "positivity": cmd_positivity,
    "transversality": cmd_transversality,
    "reconstruct": cmd_reconstruct,
    "rank": cmd_rank,
    "intersect": cmd_intersect,
    "hilbert3": cmd_hilbert3,
    "resonance": cmd_resonance,
}


def _inputs(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if k not in ("out", "workers")}


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8")


def run(command: str, cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    manifest = {"command": command, "config": cfg, "version": __version__}
    try:
        files, passed, extra = HANDLERS[command](cfg)
        status = 0 if passed else CheckFailed.exit_code
        for name, text in files.items():
            _write(out, name, text)
        manifest.update(outputs=sorted(files), passed=bool(passed), **extra)
    except HitchinError as exc:
        status = exc.exit_code
        record = {"error": type(exc).__name__, "message": str(exc), "exit_code": status}
        _write(out, "error.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
        manifest.update(outputs=["error.json"], passed=False, error=record)
        print(f"hitchin {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
    manifest["exit_code"] = status
    manifest["wall_time"] = time.perf_counter() - start
    _write(out, "manifest.json", json.dumps(rigidity._plain(manifest), indent=2, sort_keys=True) + "\n")
    return status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
    except (InputError, OSError) as exc:
        print(f"hitchin {args.command}: {exc}", file=sys.stderr)
        return 2
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
