"""Command-line driver: ``marlsgs {dns,target,train,evaluate,compare}``.

Exit codes: 0 success, 1 usage/config error, 2 numerical blow-up, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, case_config, desk_config, scale_config
from .diagnostics import write_pdf_csv, write_spectrum_csv
from .env import TargetSpectrum, build_target, coarsening_factor
from .solver import BlowUpError, CFLError, SimState, random_vorticity, read_archive, run, write_archive
from .spectral import make_grid
from .trainer import evaluate, load_checkpoint, train

log = logging.getLogger("marlsgs")

EXIT_OK, EXIT_USAGE, EXIT_BLOWUP, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def resolve_config(args) -> RunConfig:
    """Load ``--config`` if it exists, else build from ``--case``/``--scale``;
    ``--seed`` overrides. The result is materialized as ``config.json`` in
    the output directory when no config file was given."""
    if args.config and Path(args.config).exists():
        cfg = RunConfig.load(args.config)
    else:
        case = args.case or 1
        cfg = desk_config(case) if args.scale == "desk" else scale_config(case_config(case), int(args.scale or 1))
        if args.config:
            cfg.save(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.trainer.seed = args.seed
    return cfg


def _out(args) -> Path:
    if not args.out:
        raise UsageError("--out DIR is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _path(cfg: RunConfig, out: Path, key: str) -> Path:
    return out / cfg.paths[key]


def _materialize(cfg: RunConfig, out: Path) -> None:
    path = out / "config.json"
    if not path.exists():
        cfg.save(path)


def cmd_dns(cfg: RunConfig, out: Path) -> dict:
    _materialize(cfg, out)
    grid = make_grid(cfg.n_dns)
    state = SimState(random_vorticity(grid, cfg.physics.kappa_f, cfg.seed))
    log.info("DNS n=%d Re=%g: spin-up %d steps", cfg.n_dns, cfg.physics.re, cfg.spinup_steps)
    if cfg.spinup_steps:
        state, _ = run(state, cfg.physics, cfg.dt_dns, cfg.spinup_steps, cfg.spinup_steps)
    n_snap = cfg.n_target_snapshots + cfg.n_init_snapshots
    state, archive = run(state, cfg.physics, cfg.dt_dns, n_snap * cfg.sample_every, cfg.sample_every,
                         seed=cfg.seed)
    n_t = cfg.n_target_snapshots
    archive.extra = {"target_indices": list(range(n_t)), "init_indices": list(range(n_t, n_snap))}
    write_archive(_path(cfg, out, "archive"), archive)
    write_archive(_path(cfg, out, "target_archive"), archive.subset(range(n_t)))
    write_archive(_path(cfg, out, "init_archive"), archive.subset(range(n_t, n_snap)))
    sigma = float(np.mean([np.std(np.fft.irfft2(c, s=(cfg.n_dns,) * 2, norm="forward"))
                           for c in archive.coeffs]))
    log.info("wrote %d snapshots, sigma(omega)=%.3f", len(archive), sigma)
    return {"n_snapshots": len(archive), "sigma_omega": sigma}


def cmd_target(cfg: RunConfig, out: Path, archive_path=None) -> Path:
    path = Path(archive_path) if archive_path else _path(cfg, out, "target_archive")
    try:
        archive = read_archive(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    target = build_target(archive, cfg.n_les)
    dest = _path(cfg, out, "target")
    target.write_csv(dest, {"n_les": cfg.n_les, "n_dns": archive.n, "source": path.name})
    return dest


def cmd_train(cfg: RunConfig, out: Path):
    _materialize(cfg, out)
    target_path = _path(cfg, out, "target")
    if not target_path.exists():
        raise FileNotFoundError(f"target spectrum {target_path} not found; run 'target' first")
    target = TargetSpectrum.read_csv(target_path)
    init_path = _path(cfg, out, "init_archive")
    init = read_archive(init_path) if init_path.exists() else None
    return train(cfg.physics, cfg.env_config(), target, cfg.trainer, init, _path(cfg, out, "train_dir"))


def cmd_evaluate(cfg: RunConfig, out: Path, checkpoint=None) -> dict:
    ckpt = Path(checkpoint) if checkpoint else _path(cfg, out, "checkpoint")
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint {ckpt} not found")
    snap = load_checkpoint(ckpt)
    target = TargetSpectrum.read_csv(_path(cfg, out, "target"))
    init = read_archive(_path(cfg, out, "init_archive"))
    reference = read_archive(_path(cfg, out, "archive"))
    results = evaluate(snap, cfg.physics, cfg.env_config(), target, init, reference,
                       cfg.eval_horizon, cfg.eval_seed, cfg.eval_burn_in, cfg.trainer.n_global)
    return write_evaluation(cfg, out, results, reference.n)


def write_evaluation(cfg: RunConfig, out: Path, results: dict, n_dns: int) -> dict:
    dest = _path(cfg, out, "eval_dir")
    dest.mkdir(parents=True, exist_ok=True)
    meta = {"case": cfg.case, "n_les": cfg.n_les, "re": cfg.physics.re, "seed": cfg.eval_seed}
    for name, st in results.items():
        m = dict(meta, closure=name)
        write_spectrum_csv(dest / f"{name}_enstrophy_spectrum.csv", st.enstrophy, m, "enstrophy")
        write_spectrum_csv(dest / f"{name}_energy_spectrum.csv", st.energy, m, "energy")
        write_pdf_csv(dest / f"{name}_vorticity_pdf.csv", st.pdf, m)
    summary = {
        "case": cfg.case,
        "n_dns": n_dns,
        "n_les": cfg.n_les,
        "dt_ratio": cfg.dt_ratio,
        "coarsening_factor": coarsening_factor(n_dns, cfg.n_les, cfg.dt_ratio),
        "closures": {name: st.summary() for name, st in results.items()},
    }
    with open(dest / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def format_comparison(summaries: dict) -> str:
    cols = ("spectrum_log_error", "sigma_omega", "tail_fraction_3sigma", "tail_fraction_3sigma_ref",
            "tail_fraction_4sigma_ref", "stable")
    lines = []
    for label, summ in summaries.items():
        lines.append(f"{label}  (coarsening {summ['coarsening_factor']:g}x)")
        lines.append("  {:<22}".format("closure") + "".join(f"{c:>22}" for c in cols))
        for name, row in summ["closures"].items():
            vals = []
            for c in cols:
                v = row.get(c)
                vals.append(f"{v:>22.6g}" if isinstance(v, float) else f"{str(v):>22}")
            lines.append(f"  {name:<22}" + "".join(vals))
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (JSON); written with defaults if missing")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--case", type=int, choices=(1, 2, 3))
    common.add_argument("--scale", default="1",
                        help="integer shrink factor for desk-scale runs, or 'desk' for the reduced acceptance setup")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="marlsgs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("dns", parents=[common], help="run DNS and write snapshot archives")
    t = sub.add_parser("target", parents=[common], help="build the target enstrophy spectrum")
    t.add_argument("--archive", help="snapshot archive (default: the DNS target subset in --out)")
    sub.add_parser("train", parents=[common], help="train the closure policy")
    e = sub.add_parser("evaluate", parents=[common], help="compare closures on a held-out rollout")
    e.add_argument("--checkpoint")
    c = sub.add_parser("compare", help="tabulate evaluation summaries")
    c.add_argument("summaries", nargs="+")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            summaries = {}
            for path in args.summaries:
                with open(path) as fh:
                    summaries[path] = json.load(fh)
            print(format_comparison(summaries))
            return EXIT_OK
        out = _out(args)
        cfg = resolve_config(args)
        if args.command == "dns":
            print(json.dumps(cmd_dns(cfg, out)))
        elif args.command == "target":
            print(cmd_target(cfg, out, args.archive))
        elif args.command == "train":
            res = cmd_train(cfg, out)
            print(json.dumps({"version": res.snapshot.version, "episodes": len(res.episodes)}))
        elif args.command == "evaluate":
            summ = cmd_evaluate(cfg, out, args.checkpoint)
            print(format_comparison({str(out): summ}))
        return EXIT_OK
    except (BlowUpError, CFLError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (UsageError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
