"""Command-line front end: simulate / fit / predict / compare / sensitivity
/ outliers.

Configuration comes from an optional JSON file (``--config``) with flag
overrides taking precedence.  Every command requires an explicit seed and
all outputs are byte-reproducible under it.  ``predict``, ``compare``,
``sensitivity`` and ``outliers`` refit their chains from the dataset (chain
files do not store the latent fields needed downstream), so passing the
same seed reproduces the fit exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .dataio import (embedded_rainfall, holdout_map, parse_dataset,
                     parse_locations, write_dataset, write_latents,
                     write_predictions)
from .inference import dic, lpml, outlier_scores, predict, sensitivity
from .model import (OUTLIER_SITES, Hyperparams, ModelKind, apply_left_censoring,
                    default_simulation_truth, holdout_lattice, inject_outliers,
                    pseudo_regular_grid, simulate_dataset, SpatialDataset)
from .sampler import ChainConfig, run_chain
from .spatial import LocationSet

PRESETS = {
    "quick": (20000, 10000, 10),
    "paper": (150000, 100000, 100),
}

COMPARE_SEED_OFFSETS = {"GAUS": 1, "SUG": 2, "GLG": 3, "SUGLG": 4}

# single-hyperparameter alternates for the prior-sensitivity experiment
DEFAULT_ALTERNATES = (
    ("c0_1e2", {"c0": 1e2}),
    ("c0_1e6", {"c0": 1e6}),
    ("c1_1e3", {"c1": 1e3}),
    ("c1_1e7", {"c1": 1e7}),
    ("c2c3_1e-4_1e-8", {"c2": 1e-4, "c3": 1e-8}),
    ("c2c3_1e-8_1e-4", {"c2": 1e-8, "c3": 1e-4}),
    ("c4c5_0.7_1.5", {"c4": 0.7, "c5": 1.5}),
    ("c4c5_0.5_0.7", {"c4": 0.5, "c5": 0.7}),
    ("c6c7_0.3_1.0", {"c6": 0.30, "c7": 1.0}),
    ("c6c7_0.75_0.8", {"c6": 0.75, "c7": 0.8}),
    ("c8_0.4", {"c8": 0.4}),
    ("c8_1.4", {"c8": 1.4}),
    ("c9_0.35", {"c9": 0.35}),
    ("c9_1.6", {"c9": 1.60}),
)

_CONFIG_KEYS = {
    "model", "seed", "iters", "burnin", "thin", "preset", "data", "out",
    "save_lambda", "censor_count", "outlier_shift", "new_locs", "grid",
    "holdout", "sigma2_mode", "omega2_mode", "hyper", "alternates",
}


class UsageError(Exception):
    """Bad invocation (missing seed, unknown key); maps to exit code 1."""


@dataclass
class RunConfig:
    command: str
    model: ModelKind = ModelKind.SUGLG
    seed: int | None = None
    iters: int | None = None
    burnin: int | None = None
    thin: int | None = None
    preset: str = "paper"
    data: str | None = None
    out: str = "."
    save_lambda: bool = False
    censor_count: int = 17
    outlier_shift: float = 2.0
    new_locs: str | None = None
    grid: tuple = (20, 20)
    holdout: str | None = None
    sigma2_mode: str = "gibbs"
    omega2_mode: str = "mh"
    hyper: Hyperparams = dataclasses.field(default_factory=Hyperparams)
    alternates: tuple = DEFAULT_ALTERNATES

    def chain_lengths(self) -> tuple:
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}")
        length, burn, thin = PRESETS[self.preset]
        if self.iters is not None:
            length = self.iters
        if self.burnin is not None:
            burn = self.burnin
        if self.thin is not None:
            thin = self.thin
        return length, burn, thin

    def chain_config(self, kind: ModelKind | None = None,
                     seed: int | None = None,
                     hyper: Hyperparams | None = None) -> ChainConfig:
        length, burn, thin = self.chain_lengths()
        return ChainConfig(
            length=length, burn_in=burn, thin=thin,
            seed=self.seed if seed is None else seed,
            kind=self.model if kind is None else kind,
            hyper=self.hyper if hyper is None else hyper,
            sigma2_mode=self.sigma2_mode, omega2_mode=self.omega2_mode,
        )


def _parse_kind(text: str) -> ModelKind:
    try:
        return ModelKind[text.upper()]
    except KeyError:
        raise UsageError(
            f"unknown model {text!r}; choose from GAUS, SUG, GLG, SUGLG") from None


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as err:
        raise ValueError(f"config file {path}: invalid JSON ({err})") from None
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path}: top level must be an object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _build_hyper(overrides: dict) -> Hyperparams:
    if not isinstance(overrides, dict):
        raise ValueError("hyper must be an object of c0..c9 values")
    fields = {f.name for f in dataclasses.fields(Hyperparams)}
    unknown = set(overrides) - fields
    if unknown:
        raise UsageError(f"unknown hyperparameters: {sorted(unknown)}")
    return dataclasses.replace(Hyperparams(), **{k: float(v) for k, v in overrides.items()})


def _resolve(args: argparse.Namespace) -> RunConfig:
    file_cfg = _load_config_file(args.config) if args.config else {}
    cfg = RunConfig(command=args.command)

    if "model" in file_cfg:
        cfg.model = _parse_kind(str(file_cfg["model"]))
    if "hyper" in file_cfg:
        cfg.hyper = _build_hyper(file_cfg["hyper"])
    if "alternates" in file_cfg:
        alts = []
        for entry in file_cfg["alternates"]:
            if not isinstance(entry, dict) or "name" not in entry:
                raise ValueError("each alternate needs a name plus c-overrides")
            over = {k: v for k, v in entry.items() if k != "name"}
            alts.append((str(entry["name"]), over))
        cfg.alternates = tuple(alts)
    for key in ("seed", "iters", "burnin", "thin", "censor_count"):
        if key in file_cfg:
            setattr(cfg, key, int(file_cfg[key]))
    if "outlier_shift" in file_cfg:
        cfg.outlier_shift = float(file_cfg["outlier_shift"])
    for key in ("preset", "data", "out", "new_locs", "holdout",
                "sigma2_mode", "omega2_mode"):
        if key in file_cfg:
            setattr(cfg, key, str(file_cfg[key]))
    if "save_lambda" in file_cfg:
        cfg.save_lambda = bool(file_cfg["save_lambda"])
    if "grid" in file_cfg:
        nx, ny = file_cfg["grid"]
        cfg.grid = (int(nx), int(ny))

    if getattr(args, "model", None):
        cfg.model = _parse_kind(args.model)
    for key in ("seed", "iters", "burnin", "thin"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    for key in ("preset", "data", "out", "new_locs", "holdout"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "save_lambda", False):
        cfg.save_lambda = True
    if getattr(args, "censor_count", None) is not None:
        cfg.censor_count = args.censor_count
    if getattr(args, "outlier_shift", None) is not None:
        cfg.outlier_shift = args.outlier_shift
    if getattr(args, "grid", None) is not None:
        cfg.grid = (args.grid[0], args.grid[1])

    if cfg.seed is None:
        raise UsageError("a seed is required (--seed or config key); there is "
                         "no wall-clock default")
    return cfg


def _load_dataset(cfg: RunConfig) -> SpatialDataset:
    if cfg.data is None:
        raise UsageError("no input data: pass --data PATH or --data rainfall")
    if cfg.data == "rainfall":
        return embedded_rainfall()
    return parse_dataset(cfg.data)


def _fmt(value: float) -> str:
    return "%.17g" % value


def _stats(draws: np.ndarray) -> dict:
    q = np.quantile(draws, [0.025, 0.5, 0.975])
    return {
        "mean": float(draws.mean()),
        "sd": float(draws.std(ddof=1)) if draws.size > 1 else 0.0,
        "q2.5": float(q[0]),
        "q50": float(q[1]),
        "q97.5": float(q[2]),
    }


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_chain_csv(path: str, chain, save_lambda: bool) -> None:
    header = list(chain.param_names) + ["log_conditional"]
    cols = [chain.params, chain.log_conditional[:, None]]
    if save_lambda:
        header += [f"lambda_{i}" for i in range(chain.lam_draws.shape[1])]
        cols.append(chain.lam_draws)
    mat = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in mat:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _grid_locations(ds: SpatialDataset, nx: int, ny: int) -> LocationSet:
    coords = ds.locations.coords
    xs = np.linspace(coords[:, 0].min(), coords[:, 0].max(), nx)
    ys = np.linspace(coords[:, 1].min(), coords[:, 1].max(), ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return LocationSet(np.column_stack([gx.ravel(), gy.ravel()]))


def _cmd_simulate(cfg: RunConfig) -> int:
    locs_fit = pseudo_regular_grid()
    locs_hold = holdout_lattice()
    all_coords = np.vstack([locs_fit.coords, locs_hold.coords])
    all_locs = LocationSet(all_coords)
    n_fit = len(locs_fit)
    truth = default_simulation_truth()
    rng = np.random.default_rng(cfg.seed)
    ds_all, latents = simulate_dataset(rng, all_locs, np.ones((len(all_locs), 1)),
                                       truth, cfg.model)
    y_all = np.array([ds_all.exact[i] for i in range(ds_all.n)])

    ds_fit = SpatialDataset(
        locations=locs_fit, design=np.ones((n_fit, 1)),
        exact={i: y_all[i] for i in range(n_fit)})
    if cfg.outlier_shift != 0.0:
        ds_fit = inject_outliers(ds_fit, OUTLIER_SITES, cfg.outlier_shift)
    if cfg.censor_count > 0:
        ds_fit = apply_left_censoring(ds_fit, cfg.censor_count)
    ds_hold = SpatialDataset(
        locations=locs_hold, design=np.ones((len(locs_hold), 1)),
        exact={j: y_all[n_fit + j] for j in range(len(locs_hold))})

    os.makedirs(cfg.out, exist_ok=True)
    write_dataset(ds_fit, os.path.join(cfg.out, "dataset.csv"))
    write_dataset(ds_hold, os.path.join(cfg.out, "holdout.csv"),
                  ids=[f"h{j:03d}" for j in range(len(locs_hold))])
    write_latents(os.path.join(cfg.out, "latents.csv"), all_locs, y_all, latents)
    truth_used = truth.restricted_to(cfg.model)
    _write_json(os.path.join(cfg.out, "truth.json"), {
        "kind": cfg.model.name,
        "seed": cfg.seed,
        "censor_count": cfg.censor_count,
        "outlier_shift": cfg.outlier_shift,
        "outlier_sites": list(OUTLIER_SITES),
        "params": {
            "beta0": truth_used.beta[0], "alpha": truth_used.alpha,
            "sigma2": truth_used.sigma2, "omega2": truth_used.omega2,
            "nu": truth_used.nu, "theta_w": truth_used.theta_w,
            "theta_lambda": truth_used.theta_lambda,
        },
    })
    return 0


def _fit_chain(cfg: RunConfig, ds: SpatialDataset, kind=None, seed=None, hyper=None):
    return run_chain(None, ds, cfg.chain_config(kind=kind, seed=seed, hyper=hyper))


def _summary_payload(cfg: RunConfig, chain) -> dict:
    params = {name: _stats(chain.params[:, j])
              for j, name in enumerate(chain.param_names)}
    censored = {str(int(site)): _stats(chain.y_imputed[:, j])
                for j, site in enumerate(chain.censored_idx)}
    return {
        "kind": chain.kind.name,
        "seed": cfg.seed,
        "length": chain.config.length,
        "burn_in": chain.config.burn_in,
        "thin": chain.config.thin,
        "retained": chain.n_draws,
        "params": params,
        "acceptance_rates": {k: float(v) for k, v in chain.acceptance_rates.items()},
        "censored_sites": censored,
    }


def _cmd_fit(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    chain = _fit_chain(cfg, ds)
    os.makedirs(cfg.out, exist_ok=True)
    _write_chain_csv(os.path.join(cfg.out, "chain.csv"), chain, cfg.save_lambda)
    _write_json(os.path.join(cfg.out, "summary.json"), _summary_payload(cfg, chain))
    return 0


def _cmd_predict(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    if cfg.new_locs is not None:
        new_locs = parse_locations(cfg.new_locs)
    else:
        new_locs = _grid_locations(ds, cfg.grid[0], cfg.grid[1])
    chain = _fit_chain(cfg, ds)
    rng = np.random.default_rng(cfg.seed + 50021)
    results = predict(rng, chain, ds, new_locs)
    os.makedirs(cfg.out, exist_ok=True)
    write_predictions(os.path.join(cfg.out, "predictions.csv"), results)
    return 0


def _cmd_compare(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    hold = None
    if cfg.holdout is not None:
        hold = holdout_map(parse_dataset(cfg.holdout))
        hold_locs = LocationSet(np.array(list(hold.keys())))
    dic_by = {}
    lpml_by = {}
    rmse_by = {} if hold is not None else None
    for kind_name, offset in COMPARE_SEED_OFFSETS.items():
        kind = ModelKind[kind_name]
        chain = _fit_chain(cfg, ds, kind=kind, seed=cfg.seed + offset)
        dic_by[kind_name] = dic(chain, ds)
        lpml_by[kind_name] = lpml(chain, ds)
        if hold is not None:
            rng = np.random.default_rng(cfg.seed + 90000 + offset)
            preds = predict(rng, chain, ds, hold_locs)
            from .inference import rmse as rmse_fn
            rmse_by[kind_name] = rmse_fn(preds, hold)
    payload = {
        "dic": dic_by,
        "lpml": lpml_by,
        "rmse": rmse_by,
        "best_dic": min(dic_by, key=dic_by.get),
        "best_lpml": max(lpml_by, key=lpml_by.get),
    }
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "comparison.json"), payload)
    return 0


def _cmd_sensitivity(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    bench = _fit_chain(cfg, ds)
    per_alt = {}
    alt_chains = []
    for i, (name, over) in enumerate(cfg.alternates):
        hyper = _build_hyper(over)
        alt = _fit_chain(cfg, ds, seed=cfg.seed + 1 + i, hyper=hyper)
        alt_chains.append(alt)
        per_alt[name] = sensitivity(bench, [alt])
    max_mrc = sensitivity(bench, alt_chains)
    payload = {
        "per_alternate": per_alt,
        "max": max_mrc,
        "largest": max(max_mrc, key=max_mrc.get),
    }
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "sensitivity.json"), payload)
    return 0


def _cmd_outliers(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    if not cfg.model.has_mixture:
        raise ValueError(
            f"outlier scores need a mixture kind, got {cfg.model.name}")
    chain = _fit_chain(cfg, ds)
    scores = outlier_scores(chain)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "outliers.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("site,x,y,score\n")
        for i in range(ds.n):
            x, y = ds.locations.coords[i]
            fh.write(f"{i},{_fmt(x)},{_fmt(y)},{_fmt(scores[i])}\n")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "compare": _cmd_compare,
    "sensitivity": _cmd_sensitivity,
    "outliers": _cmd_outliers,
}


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file")
    shared.add_argument("--model", help="GAUS | SUG | GLG | SUGLG")
    shared.add_argument("--seed", type=int, help="RNG seed (required)")
    shared.add_argument("--iters", type=int, help="total MCMC iterations")
    shared.add_argument("--burnin", type=int, help="burn-in iterations")
    shared.add_argument("--thin", type=int, help="thinning interval")
    shared.add_argument("--out", help="output directory (default .)")
    shared.add_argument("--preset", choices=sorted(PRESETS),
                        help="chain-length preset (default paper)")

    parser = argparse.ArgumentParser(
        prog="suglg",
        description="Bayesian spatial modelling for skewed, heavy-tailed, "
                    "censored data")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[shared],
                           help="simulate the 97-site study design")
    p_sim.add_argument("--censor-count", type=int, dest="censor_count",
                       help="how many smallest values to left-censor")
    p_sim.add_argument("--outlier-shift", type=float, dest="outlier_shift",
                       help="shift added to the designated outlier sites")

    p_fit = sub.add_parser("fit", parents=[shared], help="run one chain")
    p_fit.add_argument("--data", help="dataset CSV path, or 'rainfall'")
    p_fit.add_argument("--save-lambda", action="store_true", dest="save_lambda",
                       help="include per-site mixing draws in chain.csv")

    p_pred = sub.add_parser("predict", parents=[shared],
                            help="fit then predict at new locations")
    p_pred.add_argument("--data", help="dataset CSV path, or 'rainfall'")
    p_pred.add_argument("--new-locs", dest="new_locs",
                        help="CSV of prediction locations (x,y columns)")
    p_pred.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"),
                        help="prediction grid over the bounding box")

    p_cmp = sub.add_parser("compare", parents=[shared],
                           help="fit all four kinds and score them")
    p_cmp.add_argument("--data", help="dataset CSV path, or 'rainfall'")
    p_cmp.add_argument("--holdout", help="exact dataset CSV for RMSE scoring")

    p_sen = sub.add_parser("sensitivity", parents=[shared],
                           help="benchmark-vs-alternate-priors experiment")
    p_sen.add_argument("--data", help="dataset CSV path, or 'rainfall'")

    p_out = sub.add_parser("outliers", parents=[shared],
                           help="per-site posterior mixing means")
    p_out.add_argument("--data", help="dataset CSV path, or 'rainfall'")

    return parser


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = _resolve(args)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
