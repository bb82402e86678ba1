"""Batch pipeline driver.

Subcommands (mesh, truth, forward, simulate, sample, eval, export) share one
output directory and one resolved configuration, persisted to run.json so a
pipeline can be reproduced file-by-file.  A single top-level seed derives
every random stream through a fixed role scheme:

    SeedSequence([seed, role]) with role 0 = mesh generation,
    1 = fan-beam design, 2 = measurement noise, 3 = prior-draw truth,
    10 + k = chain k.

Exit codes: 0 success, 1 usage/config error, 2 missing or inconsistent data.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import eval as eval_mod
from . import plots
from .data import Dataset, load_dataset, save_dataset, simulate
from .field import (
    AlgebraField,
    bumps_field,
    field_l2_norm,
    load_field,
    save_field,
    zero_field,
)
from .forward import scattering_matrices, set_num_threads
from .geometry import builtin_metric, sample_fanbeam, trace_bundle
from .liegroup import GROUPS
from .mcmc import ChainConfig, run_chain
from .mesh import Mesh, generate_disk_mesh, load_mesh, save_mesh
from .prior import MaternParams, build_sampler, sample_field, shrinkage_scale

DEFAULTS = {
    "seed": 0,
    "group": "su2",
    "mesh.target_nv": 886,
    "metric.name": "gaussian-pair",
    "forward.step": 1e-3,
    "truth.kind": "bumps",
    "data.n": 200,
    "noise.sigma": 0.05,
    "prior.nu": 3.0,
    "prior.ell": 0.2,
    "prior.jitter": 1e-10,
    "prior.shrink": False,
    "prior.alpha": 2.0,
    "mcmc.delta": 2.5e-5,
    "mcmc.steps": 20000,
    "mcmc.burn_in": None,
    "mcmc.tune": False,
    "mcmc.thin": 10,
    "mcmc.chains": 1,
}

_ROLE_MESH = 0
_ROLE_DESIGN = 1
_ROLE_NOISE = 2
_ROLE_TRUTH = 3
_ROLE_CHAIN = 10


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def derive_seed(seed: int, role: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(role)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# configuration


def _coerce(key: str, value):
    """Coerce a parsed config value to the type of its default."""
    default = DEFAULTS[key]
    if key == "mcmc.burn_in":
        if value is None:
            return None
        return int(value)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise UsageError(f"config key {key} expects true/false, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def _flatten_config(obj, prefix=""):
    flat = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten_config(v, f"{key}."))
        else:
            flat[key] = v
    return flat


def _parse_config_file(path: Path) -> dict:
    """key=value lines (hash comments allowed) or a JSON object, possibly
    nested; nested sections flatten to dotted keys."""
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            return _flatten_config(json.loads(text))
        except json.JSONDecodeError as e:
            raise UsageError(f"config {path}: {e}") from e
    flat = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config {path}:{ln}: expected key=value")
        key, _, value = line.partition("=")
        value = value.strip()
        try:
            flat[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            flat[key.strip()] = value
    return flat


def resolve_config(out: Path, args) -> dict:
    """Layer defaults < existing run.json < --config file < explicit flags."""
    cfg = dict(DEFAULTS)

    def merge(updates, origin):
        for key, value in updates.items():
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r} ({origin})")
            cfg[key] = _coerce(key, value)

    run_path = out / "run.json"
    if run_path.exists():
        try:
            stored = json.loads(run_path.read_text())
        except json.JSONDecodeError as e:
            raise DataError(f"unreadable {run_path}: {e}") from e
        merge(stored.get("config", {}), "run.json")
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        merge(_parse_config_file(path), "config file")

    flag_map = {
        "seed": "seed",
        "group": "group",
        "nv": "mesh.target_nv",
        "metric": "metric.name",
        "step": "forward.step",
        "truth": "truth.kind",
        "n": "data.n",
        "sigma": "noise.sigma",
        "nu": "prior.nu",
        "ell": "prior.ell",
        "shrink": "prior.shrink",
        "delta": "mcmc.delta",
        "steps": "mcmc.steps",
        "burn_in": "mcmc.burn_in",
        "tune": "mcmc.tune",
        "thin": "mcmc.thin",
        "chains": "mcmc.chains",
    }
    overrides = {}
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_burn_in", False):
        overrides["mcmc.burn_in"] = 0
    merge(overrides, "flags")

    if cfg["group"] not in GROUPS:
        raise UsageError(f"group must be one of {sorted(GROUPS)}")
    if cfg["truth.kind"] not in ("zero", "bumps", "prior"):
        raise UsageError("truth.kind must be zero, bumps or prior")
    if cfg["forward.step"] <= 0:
        raise UsageError("forward.step must be positive")
    if cfg["noise.sigma"] < 0:
        raise UsageError("noise.sigma must be nonnegative")
    if cfg["data.n"] < 1:
        raise UsageError("data.n must be positive")
    if cfg["mcmc.chains"] < 1:
        raise UsageError("mcmc.chains must be positive")
    builtin_metric(cfg["metric.name"])  # validates the name
    return cfg


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run_file(out: Path, cfg: dict) -> None:
    _write_json(out / "run.json", {"version": 1, "config": cfg})


# ---------------------------------------------------------------------------
# artifact helpers


def _ensure_mesh(out: Path, cfg: dict) -> Mesh:
    path = out / "mesh.json"
    if path.exists():
        return load_mesh(path)
    mesh = generate_disk_mesh(
        cfg["mesh.target_nv"], seed=derive_seed(cfg["seed"], _ROLE_MESH)
    )
    save_mesh(mesh, path)
    return mesh


def _ensure_truth(out: Path, cfg: dict, mesh: Mesh) -> AlgebraField:
    path = out / "truth.json"
    if path.exists():
        return load_field(path, mesh)
    kind, group = cfg["truth.kind"], cfg["group"]
    if kind == "zero":
        truth = zero_field(mesh, group)
    elif kind == "bumps":
        truth = bumps_field(mesh, group)
    else:
        sampler = build_sampler(mesh, _prior_params(cfg))
        rng = np.random.default_rng(derive_seed(cfg["seed"], _ROLE_TRUTH))
        truth = sample_field(sampler, group, rng)
    save_field(truth, path)
    return truth


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"{path} is missing; run `spintomo {hint}` first")
    return path


def _prior_params(cfg: dict) -> MaternParams:
    return MaternParams(
        nu=cfg["prior.nu"], ell=cfg["prior.ell"], jitter=cfg["prior.jitter"]
    )


def _design_bundle(cfg: dict, mesh: Mesh, entries=None):
    metric = builtin_metric(cfg["metric.name"])
    if entries is None:
        entries = sample_fanbeam(cfg["data.n"], seed=derive_seed(cfg["seed"], _ROLE_DESIGN))
    return trace_bundle(metric, mesh, entries, h=cfg["forward.step"])


def _flatten_matrix(u: np.ndarray, group: str) -> list[float]:
    if group == "su2":
        flat = np.empty(u.size * 2)
        flat[0::2] = u.real.ravel()
        flat[1::2] = u.imag.ravel()
    else:
        flat = u.ravel()
    return [float(v) for v in flat]


# ---------------------------------------------------------------------------
# subcommands


def cmd_mesh(out: Path, cfg: dict, args) -> int:
    mesh = _ensure_mesh(out, cfg)
    write_run_file(out, cfg)
    print(f"mesh: {mesh.nv} vertices, {len(mesh.triangles)} triangles")
    return 0


def cmd_truth(out: Path, cfg: dict, args) -> int:
    mesh = _ensure_mesh(out, cfg)
    truth = _ensure_truth(out, cfg, mesh)
    write_run_file(out, cfg)
    print(f"truth: {cfg['truth.kind']} field, |truth|_L2 = {field_l2_norm(truth):.6g}")
    return 0


def cmd_forward(out: Path, cfg: dict, args) -> int:
    mesh = _ensure_mesh(out, cfg)
    truth = _ensure_truth(out, cfg, mesh)
    bundle = _design_bundle(cfg, mesh)
    u = scattering_matrices(truth, bundle)
    plots_dir = out / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)
    width = u[0].size * (2 if cfg["group"] == "su2" else 1) if len(u) else 0
    with open(plots_dir / "forward.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "alpha"] + [f"y{i}" for i in range(width)])
        for e, mat in zip(bundle.entries, u):
            w.writerow(
                [repr(e.beta), repr(e.alpha)]
                + [repr(v) for v in _flatten_matrix(mat, cfg["group"])]
            )
    write_run_file(out, cfg)
    print(f"forward: wrote {len(u)} scattering rows to {plots_dir / 'forward.csv'}")
    return 0


def cmd_simulate(out: Path, cfg: dict, args) -> int:
    mesh = _ensure_mesh(out, cfg)
    truth = _ensure_truth(out, cfg, mesh)
    bundle = _design_bundle(cfg, mesh)
    ds = simulate(
        truth, bundle, cfg["noise.sigma"], derive_seed(cfg["seed"], _ROLE_NOISE)
    )
    save_dataset(ds, out / "data.json")
    write_run_file(out, cfg)
    print(f"simulate: {len(ds)} records at sigma={ds.sigma:g} -> {out / 'data.json'}")
    return 0


def cmd_sample(out: Path, cfg: dict, args) -> int:
    mesh = load_mesh(_require(out / "mesh.json", "mesh"))
    ds = load_dataset(_require(out / "data.json", "simulate"))
    bundle = _design_bundle(cfg, mesh, entries=list(ds.entries))
    scale = (
        shrinkage_scale(len(ds), cfg["prior.alpha"]) if cfg["prior.shrink"] else 1.0
    )
    sampler = build_sampler(mesh, _prior_params(cfg), scale=scale)

    chain_dir = out / "chain"
    chain_dir.mkdir(parents=True, exist_ok=True)
    n_chains = cfg["mcmc.chains"]
    reports = []
    for k in range(n_chains):
        chain_cfg = ChainConfig(
            delta=cfg["mcmc.delta"],
            n_steps=cfg["mcmc.steps"],
            burn_in=cfg["mcmc.burn_in"],
            tune=cfg["mcmc.tune"],
            seed=derive_seed(cfg["seed"], _ROLE_CHAIN + k),
            thin=cfg["mcmc.thin"],
        )
        report = run_chain(chain_cfg, sampler, ds, bundle)
        reports.append(report)
        print(
            f"chain {k}: acceptance {report.acceptance_rate:.3f}, "
            f"delta {report.delta_used:g}"
        )

    pooled = AlgebraField(
        mesh,
        ds.group,
        np.mean([r.posterior_mean.coeffs for r in reports], axis=0),
    )
    save_field(pooled, chain_dir / "mean.json")
    if n_chains > 1:
        for k, r in enumerate(reports):
            save_field(r.posterior_mean, chain_dir / f"mean_{k}.json")

    thin = cfg["mcmc.thin"]
    with open(chain_dir / "loglik.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + [f"loglik_{k}" for k in range(n_chains)])
        for i in range(len(reports[0].loglik_trace)):
            w.writerow(
                [(i + 1) * thin] + [repr(r.loglik_trace[i]) for r in reports]
            )

    burn_in = cfg["mcmc.burn_in"]
    _write_json(
        chain_dir / "report.json",
        {
            "version": 1,
            "n_chains": n_chains,
            "n_steps": cfg["mcmc.steps"],
            "burn_in": cfg["mcmc.steps"] // 5 if burn_in is None else burn_in,
            "chains": [
                {
                    "acceptance_rate": r.acceptance_rate,
                    "delta_used": r.delta_used,
                    "seed": derive_seed(cfg["seed"], _ROLE_CHAIN + k),
                }
                for k, r in enumerate(reports)
            ],
        },
    )
    write_run_file(out, cfg)
    return 0


def cmd_eval(out: Path, cfg: dict, args) -> int:
    mesh = load_mesh(_require(out / "mesh.json", "mesh"))
    truth = load_field(_require(out / "truth.json", "truth"), mesh)
    mean_path = out / "chain" / "mean.json"
    recon = load_field(mean_path, mesh) if mean_path.exists() else zero_field(
        mesh, truth.group
    )

    err = eval_mod.l2_error(recon, truth)
    truth_norm = field_l2_norm(truth)
    report = {
        "l2_error": err,
        "rel_l2_error": err / truth_norm if truth_norm > 0 else None,
        "hellinger_sq": None,
        "n_geodesics": 0,
    }
    data_path = out / "data.json"
    if data_path.exists():
        ds = load_dataset(data_path)
        report["n_geodesics"] = len(ds)
        if ds.sigma > 0:  # the affinity is undefined for noiseless data
            bundle = _design_bundle(cfg, mesh, entries=list(ds.entries))
            rho = eval_mod.hellinger_affinity(recon, truth, bundle, sigma=ds.sigma)
            report["hellinger_sq"] = 2.0 * (1.0 - rho)
    _write_json(out / "eval.json", report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_export(out: Path, cfg: dict, args) -> int:
    mesh = load_mesh(_require(out / "mesh.json", "mesh"))
    plots_dir = out / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)
    plots.save_mesh_figure(mesh, plots_dir / "mesh.png")

    truth_path = out / "truth.json"
    mean_path = out / "chain" / "mean.json"
    fields, names = [], []
    if truth_path.exists():
        fields.append(load_field(truth_path, mesh))
        names.append("truth")
    if mean_path.exists():
        fields.append(load_field(mean_path, mesh))
        names.append("mean")
    if fields:
        eval_mod.export_plot_data(mesh, fields, plots_dir / "fields.csv")
        for f, name in zip(fields, names):
            plots.save_field_figure(f, plots_dir / f"{name}.png", title=name)
    if len(fields) == 2:
        plots.save_comparison_figure(fields[0], fields[1], plots_dir / "compare.png")

    loglik_path = out / "chain" / "loglik.csv"
    if loglik_path.exists():
        with open(loglik_path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        steps = [int(r[0]) for r in body]
        series = [
            [float(r[j]) for r in body] for j in range(1, len(header))
        ]
        plots.save_trace_figure([steps] * len(series), series, plots_dir / "trace.png")
    print(f"export: wrote plot data and figures to {plots_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spintomo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, flags=()):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--out", default="runs/default", help="output directory")
        p.add_argument("--config", default=None, help="key=value or JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        for flag in flags:
            flag(p)
        return p

    def f_nv(p):
        p.add_argument("--nv", type=int, default=None, help="target vertex count")

    def f_metric(p):
        p.add_argument("--metric", default=None, choices=["euclidean", "gaussian-pair"])

    def f_group(p):
        p.add_argument("--group", default=None, choices=sorted(GROUPS))

    def f_step(p):
        p.add_argument("--step", type=float, default=None, help="ODE step size")

    def f_truth(p):
        p.add_argument("--truth", default=None, choices=["zero", "bumps", "prior"])

    def f_design(p):
        p.add_argument("--n", type=int, default=None, help="number of geodesics")

    def f_sigma(p):
        p.add_argument("--sigma", type=float, default=None, help="noise level")

    def f_prior(p):
        p.add_argument("--nu", type=float, default=None)
        p.add_argument("--ell", type=float, default=None)
        p.add_argument("--shrink", action="store_true", default=None)

    def f_mcmc(p):
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--burn-in", dest="burn_in", type=int, default=None)
        p.add_argument("--no-burn-in", dest="no_burn_in", action="store_true")
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--tune", action="store_true", default=None)
        p.add_argument("--chains", type=int, default=None)
        p.add_argument("--thin", type=int, default=None)

    common = (f_nv, f_metric, f_group, f_step, f_truth, f_design, f_sigma, f_prior)
    add("mesh", cmd_mesh, "generate the disk mesh", (f_nv,))
    add("truth", cmd_truth, "build the ground-truth field", common)
    add("forward", cmd_forward, "emit noiseless scattering data as CSV", common)
    add("simulate", cmd_simulate, "generate the noisy dataset", common)
    add("sample", cmd_sample, "run pCN chains on the dataset", common + (f_mcmc,))
    add("eval", cmd_eval, "report reconstruction error metrics", common)
    add("export", cmd_export, "render plot data and figures", common)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:  # --help and friends
            return int(e.code or 0)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg = resolve_config(out, args)
        if args.threads is not None:
            set_num_threads(args.threads)
        return args.func(out, cfg, args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
