"""Command-line entry point: ``npsim <command> [--config FILE] [flags] [--out DIR]``.

Every command resolves its configuration (defaults, then the config file,
then flags), writes a results directory with ``manifest.json`` plus CSV/JSON
outputs and exits 0 on success, 1 when a check fails and 2 on invalid input.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bdchain import BdSpec, ScaleExceeded, compute_moments, moment_bounds, write_moments_csv
from .experiments import (ExperimentPlan, InvalidPlan, KernelSpec, RegimeMismatch, TAIL_TOL,
                          domination_test, edge_diffusion, lower_bound_test, run_sweep)
from .kernel import (BirthKernel, CutoffExceeded, build_power_law_psi, compute_M, load_psi_csv,
                     power_law_cutoff, save_psi_csv, subcritical_threshold, validate_psi)
from .renewal import compute_weights, sample_pi, write_kn_csv
from .simulator import (DEFAULT_T_CAP, RegimeTooSlow, make_rng, run_trials, summarize,
                        write_probe_csv, write_trials_csv)

EXIT_OK, EXIT_CHECK, EXIT_INVALID = 0, 1, 2

DEFAULTS = {
    "kernel": "reversible",
    "psi": "power",
    "lambda": 1.0,
    "alpha": 4.0,
    "L_max": None,
    "N": None,
    "N_grid": None,
    "start": "full",
    "trials": 1000,
    "t_cap": DEFAULT_T_CAP,
    "seed": 0,
    "C_N": "loglog",
    "regime": "auto",
}

EXTRA_DEFAULTS = {
    "sample-pi": {"count": 10},
    "dominate": {"ts": None},
    "tail": {"t_grid": None, "level": 0.05},
    "edge": {"W": 2000, "T": 2000.0, "x0": None, "n_probes": 21, "trials": 100},
}

# flag name -> (config key, type)
FLAGS = {
    "kernel": ("kernel", str),
    "psi": ("psi", str),
    "lambda": ("lambda", float),
    "alpha": ("alpha", float),
    "L-max": ("L_max", int),
    "N": ("N", int),
    "N-grid": ("N_grid", str),
    "start": ("start", str),
    "trials": ("trials", int),
    "t-cap": ("t_cap", float),
    "seed": ("seed", int),
    "C-N": ("C_N", str),
    "regime": ("regime", str),
    "count": ("count", int),
    "ts": ("ts", str),
    "t-grid": ("t_grid", str),
    "level": ("level", float),
    "W": ("W", int),
    "T": ("T", float),
    "x0": ("x0", int),
    "n-probes": ("n_probes", int),
}


class ConfigError(ValueError):
    code = "invalid_config"


class CheckFailed(Exception):
    pass


# -- configuration -------------------------------------------------------------

def load_config_file(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if p.suffix in (".yaml", ".yml"):
            import yaml
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    # relative psi paths resolve against the config file
    psi = data.get("psi")
    if isinstance(psi, str) and psi != "power" and not Path(psi).is_absolute():
        data["psi"] = str((p.parent / psi).resolve())
    return data


def _parse_list(v, typ):
    if v is None or isinstance(v, list):
        return v
    if isinstance(v, str):
        try:
            return [typ(x) for x in v.replace(" ", "").split(",") if x]
        except ValueError as exc:
            raise ConfigError(f"bad list {v!r}") from exc
    return [v]


def resolve_config(command: str, file_cfg: dict, flags: dict) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(EXTRA_DEFAULTS.get(command, {}))
    unknown = set(file_cfg) - set(cfg)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(file_cfg)
    cfg.update({k: v for k, v in flags.items() if v is not None})
    cfg["N_grid"] = _parse_list(cfg["N_grid"], int)
    for key in ("ts", "t_grid"):
        if key in cfg:
            cfg[key] = _parse_list(cfg[key], float)
    for key, typ in (("lambda", float), ("alpha", float), ("trials", int), ("t_cap", float),
                     ("seed", int)):
        try:
            cfg[key] = typ(cfg[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key} must be {typ.__name__}") from exc
    if cfg["lambda"] < 0 or not math.isfinite(cfg["lambda"]):
        raise ConfigError("lambda must be a finite nonnegative number")
    if cfg["trials"] < 1:
        raise ConfigError("trials must be positive")
    if cfg["kernel"] not in ("reversible", "contact", "uniform"):
        raise ConfigError(f"unknown kernel {cfg['kernel']!r}")
    if cfg["psi"] != "power" and not Path(cfg["psi"]).is_file():
        raise ConfigError(f"psi file {cfg['psi']!r} not found")
    return cfg


def _kernel_spec(cfg) -> KernelSpec:
    csvp = None if cfg["psi"] == "power" else cfg["psi"]
    return KernelSpec(cfg["kernel"], cfg["lambda"], cfg["alpha"], cfg["L_max"], csvp)


def _psi(cfg, N_max: int):
    try:
        return _kernel_spec(cfg).psi(N_max)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _kernel(cfg, N_max: int) -> BirthKernel:
    try:
        return _kernel_spec(cfg).build(N_max)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _need_N(cfg) -> int:
    N = cfg["N"]
    if N is None and cfg["N_grid"]:
        N = cfg["N_grid"][-1]
    if N is None:
        raise ConfigError("N is required")
    N = int(N)
    if N < 1:
        raise ConfigError("N must be positive")
    return N


def _grid(cfg) -> list:
    g = cfg["N_grid"] or ([cfg["N"]] if cfg["N"] is not None else None)
    if not g:
        raise ConfigError("N_grid (or N) is required")
    return [int(n) for n in g]


def _plan(cfg) -> ExperimentPlan:
    plan = ExperimentPlan(_kernel_spec(cfg), _grid(cfg), cfg["start"], cfg["trials"],
                          cfg["t_cap"], cfg["seed"], cfg["regime"], cfg["C_N"])
    try:
        plan.validate()
    except InvalidPlan as exc:
        raise ConfigError(str(exc)) from exc
    return plan


# -- output helpers --------------------------------------------------------------

def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()


class Results:
    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def csv(self, name: str):
        return open(self.path(name), "w", newline="")

    def json(self, name: str, obj) -> None:
        dump_json(obj, self.path(name))


# -- commands --------------------------------------------------------------------

def cmd_validate(cfg, res: Results) -> bool:
    if cfg["kernel"] != "reversible":
        k = _kernel(cfg, 2)
        N = cfg["N"] or 64
        m = compute_M(k, N)
        res.json("report.json", {"kernel": k.describe(), "M": m.M, "N": N})
        print(f"M(N={N}) = {m.M!r}")
        return True
    N = cfg["N"] or 64
    psi = _psi(cfg, N)
    rep = validate_psi(psi, tail_tol=TAIL_TOL if cfg["psi"] == "power" else None)
    out = {"psi": psi.label, "L_max": psi.L_max, "tail_mass": psi.tail_mass,
           "second_moment": psi.second_moment, "checks": rep.to_dict()}
    if N <= psi.L_max + 1 and N >= 2:
        lam_star, n_star = subcritical_threshold(psi, N, return_argmin=True)
        k = BirthKernel.reversible(cfg["lambda"], psi)
        out.update(N=N, M=compute_M(k, N).M, subcritical_threshold=lam_star, threshold_n=n_star)
    res.json("report.json", out)
    save_psi_csv(psi, res.path("psi.csv"))
    for name, c in rep.checks.items():
        print(f"{name:16s} {'ok' if c.passed else 'FAIL'} {c.detail}")
    if "M" in out:
        print(f"M(N={N}) = {out['M']!r}  subcritical threshold = {out['subcritical_threshold']!r}")
    return rep.ok


def cmd_simulate(cfg, res: Results) -> bool:
    N = _need_N(cfg)
    k = _kernel(cfg, N)
    if cfg["start"] not in ("full", "pi"):
        raise ConfigError("start must be 'full' or 'pi'")
    samples, _ = run_trials(k, N, cfg["trials"], cfg["seed"], start=cfg["start"],
                            t_cap=cfg["t_cap"], key=(N,))
    st = summarize(samples, N, cfg["t_cap"])
    with res.csv("sigma.csv") as fh:
        write_trials_csv(samples, fh, N=N)
    res.json("report.json", {"kernel": k.describe(), "stats": st.to_dict()})
    print(f"N={N} trials={st.trials} mean={st.mean:.6g} se={st.se:.3g} median={st.median:.6g} "
          f"capped={st.n_capped}")
    if st.n_capped == st.trials:
        raise RegimeTooSlow("all trials capped", st)
    return True


def cmd_sample_pi(cfg, res: Results) -> bool:
    N = _need_N(cfg)
    psi = _psi(cfg, N)
    w = compute_weights(N, cfg["lambda"], psi)
    rng = make_rng(cfg["seed"])
    with res.csv("samples.csv") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["draw", "size", "configuration"])
        for i in range(int(cfg["count"])):
            c = sample_pi(w, psi, rng)
            wr.writerow([i, len(c), c.to_bitstring()])
            if i < 20:
                print(c.to_bitstring())
    res.json("report.json", {"N": N, "lambda": cfg["lambda"], "log_K": w.log_K,
                             "count": int(cfg["count"])})
    return True


def cmd_kn(cfg, res: Results) -> bool:
    Ns = _grid(cfg)
    psi = _psi(cfg, max(Ns))
    rows = []
    for N in Ns:
        try:
            rows.append((N, cfg["lambda"], compute_weights(N, cfg["lambda"], psi).log_K))
        except CutoffExceeded as exc:
            raise ConfigError(str(exc)) from exc
    with res.csv("kn.csv") as fh:
        write_kn_csv(rows, fh)
    res.json("report.json", {"lambda": cfg["lambda"], "psi": psi.label,
                             "K": {str(n): math.exp(lk) for n, _, lk in rows},
                             "log_K": {str(n): lk for n, _, lk in rows}})
    for N, _, lk in rows:
        K = math.exp(lk)
        print(f"{K:.12g}" if len(rows) == 1 else f"N={N} K_N={K:.12g} log_K={lk:.12g}")
    return True


def cmd_bd(cfg, res: Results) -> bool:
    N = _need_N(cfg)
    spec = BdSpec(N, cfg["alpha"])
    mo = compute_moments(spec)
    rep = moment_bounds(spec)
    with res.csv("moments.csv") as fh:
        write_moments_csv(mo, fh)
    res.json("report.json", rep.to_dict())
    print(f"N={N} alpha={cfg['alpha']!r} Etau={mo.Etau!r} Etau2={mo.Etau2!r} "
          f"bound={rep.bound!r} onset={rep.onset}")
    return rep.second_moment_holds and rep.holds_after_onset


def cmd_sweep(cfg, res: Results) -> bool:
    plan = _plan(cfg)
    try:
        rep = run_sweep(plan)
    except RegimeMismatch as exc:
        raise ConfigError(str(exc)) from exc
    with res.csv("sigma.csv") as fh:
        header = True
        for N, st in rep.stats.items():
            _trials_rows(st.samples, fh, N, header)
            header = False
    res.json("report.json", rep.to_dict())
    for N, st in rep.stats.items():
        print(f"N={N:6d} mean={st.mean:.6g} se={st.se:.3g} median={st.median:.6g} "
              f"capped={st.n_capped}")
    for c in rep.checks:
        print(f"{c.name:22s} {'ok' if c.passed else 'FAIL'}")
    return rep.passed


def _trials_rows(samples, fh, N, header):
    if header:
        write_trials_csv(samples, fh, N=N)
        return
    import io
    buf = io.StringIO()
    write_trials_csv(samples, buf, N=N)
    fh.write(buf.getvalue().split("\n", 1)[1])


def cmd_dominate(cfg, res: Results) -> bool:
    N = _need_N(cfg)
    k = _kernel(cfg, N)
    rep = domination_test(k, N, cfg["trials"], ts=cfg.get("ts"), master_seed=cfg["seed"])
    with res.csv("dominate.csv") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "p_nps", "se_nps", "p_bd", "se_bd", "p_bd_exact", "ok"])
        for row in zip(rep.ts, rep.p_nps, rep.se_nps, rep.p_bd, rep.se_bd, rep.p_bd_exact,
                       rep.ok_sim):
            wr.writerow([repr(float(v)) for v in row[:-1]] + [int(row[-1])])
    with res.csv("sigma.csv") as fh:
        write_trials_csv(rep.nps_samples, fh, N=N)
    res.json("report.json", rep.to_dict())
    print(f"N={N} M={rep.M!r} domination {'holds' if rep.passed else 'FAILS'} "
          f"(exact chain: {'holds' if rep.passed_exact else 'FAILS'})")
    return rep.passed


def cmd_tail(cfg, res: Results) -> bool:
    N = _need_N(cfg)
    psi = _psi(cfg, N)
    samples = []
    rep = lower_bound_test(psi, N, cfg["trials"], t_grid=cfg.get("t_grid"), lam=cfg["lambda"],
                           master_seed=cfg["seed"], level=cfg["level"], cn_rule=cfg["C_N"],
                           samples_out=samples)
    with res.csv("sigma.csv") as fh:
        write_trials_csv(samples, fh, N=N)
    res.json("report.json", rep.to_dict())
    for t, p, b, v in zip(rep.ts, rep.p_emp, rep.bound, rep.vacuous):
        print(f"t={t:.6g} P(sigma<t)={p:.4g} bound={b:.4g}{' (vacuous)' if v else ''}")
    return rep.passed


def cmd_edge(cfg, res: Results) -> bool:
    W = int(cfg["W"])
    psi = _psi(cfg, W)
    try:
        rep = edge_diffusion(psi, W=W, T=float(cfg["T"]), trials=cfg["trials"], x0=cfg["x0"],
                             n_probes=int(cfg["n_probes"]), master_seed=cfg["seed"],
                             lam=cfg["lambda"])
    except (ValueError, CutoffExceeded) as exc:
        raise ConfigError(str(exc)) from exc
    with res.csv("edge.csv") as fh:
        write_probe_csv(rep.probes, fh)
    res.json("report.json", rep.to_dict())
    print(f"D_hat={rep.D_hat:.6g} R2={rep.fit.r2:.4f} drift_z={rep.drift_z:.4g} "
          f"(band {rep.drift_band:.3g}) guard_hits={rep.n_guard}/{rep.trials}")
    return rep.passed


COMMANDS = {
    "validate": (cmd_validate, "check psi and kernel assumptions, M and the subcritical threshold"),
    "simulate": (cmd_simulate, "hitting-time samples at a single N"),
    "sample-pi": (cmd_sample_pi, "exact draws from the reversible measure"),
    "kn": (cmd_kn, "partition function K_N"),
    "bd": (cmd_bd, "birth-death chain moments and bounds"),
    "sweep": (cmd_sweep, "hitting-time scaling over an N grid"),
    "dominate": (cmd_dominate, "survival comparison with the birth-death chain"),
    "tail": (cmd_tail, "lower tail bound from the partition function"),
    "edge": (cmd_edge, "diffusivity of the rightmost particle at lambda = 1"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="npsim", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"npsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON or YAML config file")
        p.add_argument("--out", help="results directory (default results/<command>-<hash>)")
        for flag, (key, typ) in FLAGS.items():
            p.add_argument(f"--{flag}", dest=key, type=typ, default=None)
    return ap


def _write_manifest(out: Path, manifest: dict) -> None:
    dump_json(manifest, out / "manifest.json")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    flags = {key: getattr(args, key) for key, _ in FLAGS.values()}
    cfg, out, res = None, None, None
    status, code, error = "ok", EXIT_OK, None
    try:
        file_cfg = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, file_cfg, flags)
        h = config_hash({"command": args.command, **cfg})
        out = Path(args.out) if args.out else Path("results") / f"{args.command}-{h[:12]}"
        res = Results(out)
        ok = COMMANDS[args.command][0](cfg, res)
        if not ok:
            status, code = "check_failed", EXIT_CHECK
            error = {"code": "check_failed", "message": "one or more checks failed"}
    except (ConfigError, CutoffExceeded, InvalidPlan) as exc:
        status, code = "invalid_config", EXIT_INVALID
        error = {"code": getattr(exc, "code", "invalid_config"), "message": str(exc)}
    except RegimeTooSlow as exc:
        status, code = "check_failed", EXIT_CHECK
        error = {"code": "regime_too_slow", "message": str(exc)}
    except ScaleExceeded as exc:
        status, code = "check_failed", EXIT_CHECK
        error = {"code": "scale_exceeded", "message": str(exc), "largest_N": exc.largest_N}
    if error:
        print(f"npsim {args.command}: {error['code']}: {error['message']}", file=sys.stderr)
    if out is None and args.out:
        out = Path(args.out)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "tool": "npsim",
            "version": __version__,
            "command": args.command,
            "config": cfg,
            "config_hash": config_hash({"command": args.command, **cfg}) if cfg else None,
            "master_seed": cfg["seed"] if cfg else None,
            "status": status,
            "exit_code": code,
            "error": error,
            "outputs": sorted(res.files) if res else [],
            "platform": {"python": platform.python_version(), "numpy": np.__version__},
            "wall_time": time.perf_counter() - t0,
        }
        _write_manifest(out, manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
