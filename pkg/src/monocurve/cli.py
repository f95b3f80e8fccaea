"""Command-line surface: simulate, fit, evaluate, gridsearch, contour, study.

Every command accepts --config FILE (flat `key = value` lines; explicit flags
override file values) and writes its fully resolved configuration next to its
primary output, so any run can be replayed exactly. Exit codes: 0 success,
1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import convex, datagen, scoring, train
from .errors import MonocurveError, NonFinite, NoConvergence

USAGE_ERROR, DATA_ERROR, NUMERIC_ERROR = 1, 2, 3

# benchmark-tuned fit defaults (the TrainConfig dataclass keeps the literal
# algorithm defaults; the CLI ships the schedule that meets the desk-scale
# quality bars)
FIT_DEFAULTS = {
    "lam": 1.0, "tau": 1.0, "lr": 0.03, "max_iters": 650, "patience": 650,
    "min_iters": 610, "lr_decay_to": 0.001, "mult_init": 5.0,
    "optimizer": "adam", "val_fraction": 0.1, "width": 64, "depth": 4,
    "no_rotation": False, "seed": 0,
}


def _threads():
    try:
        return max(1, int(os.environ.get("MONOCURVE_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def read_config_file(path):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise MonocurveError(f"bad config line: {ln!r}")
            key, val = ln.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def write_config_file(path, resolved):
    lines = [f"{k} = {resolved[k]}" for k in sorted(resolved)]
    _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _coerce(value, like):
    if isinstance(like, bool):
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return str(value)


def resolve(args, defaults):
    """Merge explicit flags > config file > builtin defaults; returns a dict
    of plain values keyed like `defaults`."""
    file_vals = read_config_file(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, default in defaults.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            out[key] = cli_val
        elif key in file_vals:
            out[key] = _coerce(file_vals[key], default if default is not None else "")
        else:
            out[key] = default
    missing = [k for k, v in out.items() if v is None]
    if missing:
        raise MonocurveError(f"missing required option(s): {', '.join(missing)}")
    return out


def _train_config(cfg):
    return train.TrainConfig(
        lam=cfg["lam"], tau=cfg["tau"], learning_rate=cfg["lr"],
        max_iters=cfg["max_iters"], patience=cfg["patience"],
        min_iters=cfg["min_iters"], optimizer=cfg["optimizer"],
        use_rotation=not cfg["no_rotation"], val_fraction=cfg["val_fraction"],
        seed=cfg["seed"], lr_decay_to=cfg["lr_decay_to"],
        mult_init=cfg["mult_init"], depth=cfg["depth"], width=cfg["width"])


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise MonocurveError(f"bad numeric list: {text!r}") from None


def _matrix_to_csv_text(M, header=None):
    rows = [",".join(header)] if header else []
    for row in np.atleast_2d(M):
        rows.append(",".join("%.17g" % v for v in row))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    defaults = {"family": None, "dim": 2, "n": 5000, "sigma_f": 1.0, "seed": 0,
                "out": None}
    cfg = resolve(args, defaults)
    spec = datagen.SyntheticSpec(family=int(cfg["family"]), dim=cfg["dim"],
                                 n=cfg["n"], sigma_f=cfg["sigma_f"], seed=cfg["seed"])
    sample = datagen.generate(spec)
    k = sample.X.shape[1]
    header = ["s"] + [f"x{i+1}" for i in range(k)] + [f"t{i+1}" for i in range(k)]
    M = np.column_stack([sample.S, sample.X, sample.truth])
    _atomic_write(cfg["out"], _matrix_to_csv_text(M, header))
    write_config_file(cfg["out"] + ".config", cfg)
    print(f"wrote {spec.n} rows to {cfg['out']}")
    return 0


def cmd_fit(args):
    defaults = dict(FIT_DEFAULTS)
    defaults.update({"data": None, "out_model": None, "out_report": None,
                     "out_curve": ""})
    cfg = resolve(args, defaults)
    X, truth, _ = datagen.read_dataset(cfg["data"])
    model, report = train.fit(X, _train_config(cfg))

    out_curve = cfg["out_curve"] or _derive(cfg["out_model"], "_curve.csv")
    cfg["out_curve"] = out_curve
    Xs = (X - model.mean) / model.std
    curve = train.evaluate_curve(model, Xs)
    k = curve.shape[1]
    _atomic_write(out_curve, _matrix_to_csv_text(curve, [f"x{i+1}" for i in range(k)]))
    if truth is not None:
        truth_std = (truth - model.mean) / model.std
        _atomic_write(_derive(out_curve, "_truth.csv"),
                      _matrix_to_csv_text(truth_std, [f"x{i+1}" for i in range(k)]))
    _atomic_write(cfg["out_model"], json.dumps(train.model_to_record(model), indent=1))
    _atomic_write(cfg["out_report"], json.dumps(report.to_record(), indent=1))
    write_config_file(cfg["out_model"] + ".config", cfg)
    print(f"fit stopped at iteration {report.stop_iteration} "
          f"(best {report.best_iteration}, val {report.best_val:.6g}); "
          f"validation hinge_neg {report.val_hinge_neg:.3g}")
    return 0


def _derive(path, suffix):
    stem, _ = os.path.splitext(path)
    return stem + suffix


def cmd_evaluate(args):
    defaults = {"curve": None, "truth": None, "cap": scoring.SUBSAMPLE_CAP,
                "seed": 0, "out": ""}
    cfg = resolve(args, defaults)
    A, _, _ = datagen.read_dataset(cfg["curve"])
    B, _, _ = datagen.read_dataset(cfg["truth"])
    rep = scoring.score_curves(A, B, cap=cfg["cap"], seed=cfg["seed"])
    out = cfg["out"] or _derive(cfg["curve"], "_scores.json")
    cfg["out"] = out
    _atomic_write(out, json.dumps(rep.to_record(), indent=1))
    write_config_file(out + ".config", cfg)
    print(f"hausdorff_x100 {rep.hausdorff_x100:.6g}")
    print(f"wasserstein2_x100 {rep.wasserstein2_x100:.6g}")
    print(f"mse {rep.mse:.6g}")
    return 0


def cmd_gridsearch(args):
    defaults = dict(FIT_DEFAULTS)
    defaults.pop("lam")
    defaults.pop("tau")
    defaults.update({"data": None, "lambdas": None, "taus": None, "out": None})
    cfg = resolve(args, defaults)
    lambdas = _float_list(cfg["lambdas"])
    taus = _float_list(cfg["taus"])
    if not lambdas or not taus:
        raise MonocurveError("lambda and tau grids must be nonempty")
    X, _, _ = datagen.read_dataset(cfg["data"])
    base = dict(cfg)
    base["lam"], base["tau"] = 1.0, 1.0
    best, rows = train.grid_search(X, lambdas, taus, _train_config(base),
                                   workers=_threads())
    header = ["lam", "tau", "loss_h", "loss_r", "score", "seed", "ok"]
    M = [[r["lam"], r["tau"], r["loss_h"], r["loss_r"], r["score"], r["seed"],
          1.0 if r["ok"] else 0.0] for r in rows]
    _atomic_write(cfg["out"], _matrix_to_csv_text(np.asarray(M), header))
    write_config_file(cfg["out"] + ".config", cfg)
    print(f"selected lambda {best[0]:g} tau {best[1]:g}")
    return 0


def cmd_contour(args):
    defaults = {"p": None, "grid": 81, "range": 2.0, "out": None,
                "level": 1e-3}
    cfg = resolve(args, defaults)
    p = float(cfg["p"])
    if p <= 1:
        raise MonocurveError("exponent p must exceed 1")
    f = convex.PowerFn(p)
    fstar = convex.PowerFn(p / (p - 1.0))
    r = float(cfg["range"])
    n = int(cfg["grid"])
    xs = np.linspace(-r, r, n)
    X1, X2 = np.meshgrid(xs, xs, indexing="ij")
    H = f.value(X1) + fstar.value(X2) - X1 * X2
    if H.min() < -1e-9:
        raise NonFinite(f"duality gap dipped to {H.min():.3e} on the grid")
    level = float(cfg["level"])
    band = np.abs(H) <= level
    pts = np.stack([X1[band], X2[band]], axis=1)
    if len(pts) >= 2 and not convex.check_monotone_set(pts, tol=25 * level):
        raise NonFinite("near-zero level cells are not a monotone set")
    M = np.stack([X1.ravel(), X2.ravel(), H.ravel()], axis=1)
    _atomic_write(cfg["out"], _matrix_to_csv_text(M, ["x1", "x2", "h"]))
    write_config_file(cfg["out"] + ".config", cfg)
    print(f"wrote {n}x{n} contour grid; min gap {H.min():.3e}; "
          f"{int(band.sum())} near-zero cells")
    return 0


def _study_cell(payload):
    (family, dim, n, sigma_f, seed, fit_cfg_dict) = payload
    spec = datagen.SyntheticSpec(family=family, dim=dim, n=n,
                                 sigma_f=sigma_f, seed=seed)
    sample = datagen.generate(spec)
    cfg = train.TrainConfig(**fit_cfg_dict)
    model, report = train.fit(sample.X, cfg)
    Xs = (sample.X - model.mean) / model.std
    truth_std = (sample.truth - model.mean) / model.std
    curve = train.evaluate_curve(model, Xs)
    rep = scoring.score_curves(curve, truth_std, seed=seed)
    return {"sigma_f": sigma_f, "seed": seed,
            "hausdorff_x100": rep.hausdorff_x100,
            "wasserstein2_x100": rep.wasserstein2_x100,
            "mse": rep.mse,
            "val_hinge_neg": report.val_hinge_neg}


def cmd_study(args):
    defaults = dict(FIT_DEFAULTS)
    defaults.update({"family": None, "dim": 2, "n": 5000, "replicates": 3,
                     "sigma_f_list": "1.0", "out": None})
    cfg = resolve(args, defaults)
    if cfg["replicates"] < 2:
        raise MonocurveError("need at least 2 replicates")
    sigmas = _float_list(cfg["sigma_f_list"])
    os.makedirs(cfg["out"], exist_ok=True)

    jobs = []
    for si, sigma in enumerate(sigmas):
        for r in range(cfg["replicates"]):
            seed = cfg["seed"] + 101 * si + r
            fit_cfg = _train_config({**cfg, "seed": seed}).__dict__.copy()
            jobs.append((int(cfg["family"]), cfg["dim"], cfg["n"], sigma, seed, fit_cfg))

    workers = _threads()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_study_cell, jobs))
    else:
        results = [_study_cell(j) for j in jobs]

    raw_header = ["sigma_f", "seed", "hausdorff_x100", "wasserstein2_x100",
                  "mse", "val_hinge_neg"]
    raw = [[r["sigma_f"], r["seed"], r["hausdorff_x100"], r["wasserstein2_x100"],
            r["mse"], r["val_hinge_neg"]] for r in results]
    _atomic_write(os.path.join(cfg["out"], "raw.csv"),
                  _matrix_to_csv_text(np.asarray(raw), raw_header))

    summary = []
    for sigma in sigmas:
        rs = [r for r in results if r["sigma_f"] == sigma]
        hm, hs = scoring.replicate_stats([r["hausdorff_x100"] for r in rs])
        wm, ws = scoring.replicate_stats([r["wasserstein2_x100"] for r in rs])
        mm, ms = scoring.replicate_stats([r["mse"] for r in rs])
        summary.append([sigma, hm, hs, wm, ws, mm, ms])
    sum_header = ["sigma_f", "haus_mean", "haus_std", "wass_mean", "wass_std",
                  "mse_mean", "mse_std"]
    _atomic_write(os.path.join(cfg["out"], "summary.csv"),
                  _matrix_to_csv_text(np.asarray(summary), sum_header))
    write_config_file(os.path.join(cfg["out"], "study.config"), cfg)
    for row in summary:
        print(f"sigma_f {row[0]:g}: hausdorff_x100 {row[1]:.3f} ({row[2]:.3f}) "
              f"wasserstein2_x100 {row[3]:.3f} ({row[4]:.3f})")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _add_fit_flags(p, with_lam_tau=True):
    if with_lam_tau:
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--tau", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--min-iters", dest="min_iters", type=int)
    p.add_argument("--lr-decay-to", dest="lr_decay_to", type=float)
    p.add_argument("--mult-init", dest="mult_init", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--no-rotation", dest="no_rotation", action="store_const", const=True)
    p.add_argument("--seed", type=int)


def build_parser():
    parser = _Parser(prog="monocurve",
                     description="Monotone principal curve estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a synthetic benchmark dataset")
    ps.add_argument("--family", type=int)
    ps.add_argument("--dim", type=int)
    ps.add_argument("--n", type=int)
    ps.add_argument("--sigma-f", dest="sigma_f", type=float)
    ps.add_argument("--seed", type=int)
    ps.add_argument("--out")
    ps.add_argument("--config")
    ps.set_defaults(func=cmd_simulate)

    pf = sub.add_parser("fit", help="fit a monotone curve to a data CSV")
    pf.add_argument("--data")
    pf.add_argument("--out-model", dest="out_model")
    pf.add_argument("--out-report", dest="out_report")
    pf.add_argument("--out-curve", dest="out_curve")
    _add_fit_flags(pf)
    pf.add_argument("--config")
    pf.set_defaults(func=cmd_fit)

    pe = sub.add_parser("evaluate", help="score an estimated curve against a truth CSV")
    pe.add_argument("--curve")
    pe.add_argument("--truth")
    pe.add_argument("--cap", type=int)
    pe.add_argument("--seed", type=int)
    pe.add_argument("--out")
    pe.add_argument("--config")
    pe.set_defaults(func=cmd_evaluate)

    pg = sub.add_parser("gridsearch", help="select (lambda, tau) on a validation grid")
    pg.add_argument("--data")
    pg.add_argument("--lambdas")
    pg.add_argument("--taus")
    pg.add_argument("--out")
    _add_fit_flags(pg, with_lam_tau=False)
    pg.add_argument("--config")
    pg.set_defaults(func=cmd_gridsearch)

    pc = sub.add_parser("contour", help="duality-gap grid for a power pair")
    pc.add_argument("--p", type=float)
    pc.add_argument("--grid", type=int)
    pc.add_argument("--range", type=float)
    pc.add_argument("--level", type=float)
    pc.add_argument("--out")
    pc.add_argument("--config")
    pc.set_defaults(func=cmd_contour)

    pt = sub.add_parser("study", help="replicate study: simulate, fit, score")
    pt.add_argument("--family", type=int)
    pt.add_argument("--dim", type=int)
    pt.add_argument("--n", type=int)
    pt.add_argument("--replicates", type=int)
    pt.add_argument("--sigma-f-list", dest="sigma_f_list")
    pt.add_argument("--out")
    _add_fit_flags(pt)
    pt.add_argument("--config")
    pt.set_defaults(func=cmd_study)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NonFinite, NoConvergence) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR
    except (MonocurveError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
