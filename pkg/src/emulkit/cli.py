"""``emulkit`` command line.

Exit codes: 0 success, 1 tolerance failure, 2 usage or file error. Every
command writes ``manifest.json`` (resolved arguments and seed) and its TSV
table into ``--out-dir``.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError, ContainerError, DimensionError, PlanError, RolloutError, TrainingError,
)

OK, TOLERANCE_FAILURE, USAGE_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


class Table:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []

    def add(self, *row):
        self.rows.append(row)

    def render(self) -> str:
        def fmt(v):
            if isinstance(v, (float, np.floating)):
                return f"{float(v):.6g}"
            return str(v)
        lines = ["\t".join(self.columns)]
        lines += ["\t".join(fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def _finish(args, table: Table, extra=None) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in vars(args).items() if k != "func"
    }
    manifest = {"command": args.command, "version": __version__, "seed": args.seed,
                "args": resolved}
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    text = table.render()
    (out / f"{args.command}.tsv").write_text(text)
    sys.stdout.write(text)


# --- commands ---------------------------------------------------------------------

def cmd_spectral_check(args) -> int:
    from . import spectral

    errors = spectral.identity_sweep(args.ns, args.ps, args.seeds, args.seed)
    table = Table(["identity", "max_rel_err", "tolerance", "pass"])
    ok = True
    for name, err in errors.items():
        tol = spectral.TOLERANCES[name] * args.tol_scale
        passed = err < tol
        ok &= passed
        table.add(name, err, tol, "yes" if passed else "no")
    _finish(args, table)
    return OK if ok else TOLERANCE_FAILURE


def _patch_demo(args) -> int:
    from .patching import PatchWeights, autoencode, jitter_average, make_plan
    from .tensorfield import BoundarySpec, FieldSet

    if len(args.plan) != 4:
        raise UsageError("--plan needs four integers p1,s1,p2,s2")
    n = args.n
    boundary = BoundarySpec.uniform(args.boundary, 2)
    plan = make_plan((n, n), tuple(args.plan), boundary)
    rng = np.random.default_rng(args.seed)
    weights = PatchWeights.random(plan, 1 + 3, 4, 4, 1, rng, nonlinear=False)
    x = np.arange(n)
    mode = np.cos(2 * np.pi * args.k0 * x / n)[:, None] * np.ones(n)[None, :]
    field = FieldSet(("u",), (0,), mode[None])
    if args.mode == "single":
        out = autoencode(field, plan, weights, (0, 0))
    else:
        out = jitter_average(field, plan, weights)
    e_in = np.abs(np.fft.fft2(field.values[0])) ** 2
    e_out = np.abs(np.fft.fft2(out.values[0])) ** 2
    floor = 1e-12 * max(e_in.max(), e_out.max())
    table = Table(["kx", "ky", "energy_in", "energy_out"])
    for kx, ky in zip(*np.nonzero((e_in > floor) | (e_out > floor))):
        table.add(int(kx), int(ky), e_in[kx, ky], e_out[kx, ky])
    signal = (e_in > floor)
    alias = float(e_out[~signal].sum() / max(e_out[signal].sum(), 1e-300))
    _finish(args, table, {"alias_energy_ratio": alias})
    print(f"# alias/signal energy = {alias:.4g}", file=sys.stderr)
    return OK


def cmd_jitter_demo(args) -> int:
    from .emulator import alias_demo

    if args.n is None:
        args.n = 64 if args.mode == "rollout" else 16
    if args.mode != "rollout":
        return _patch_demo(args)
    if args.n % args.p:
        raise UsageError("--p must divide --n")

    rng = np.random.default_rng(args.seed)
    seeds = [int(s) for s in rng.integers(2**31, size=args.seeds)] if args.seed else \
        list(range(args.seeds))
    demo = alias_demo(args.steps, seeds, args.n, args.p, args.k0, args.eps)
    table = Table(["step", "alias_energy_plain", "alias_energy_jitter_median"])
    med = np.median(demo.jittered, axis=0)
    for i, (e, j) in enumerate(zip(demo.plain, med), start=1):
        table.add(i, e, j)
    frac = demo.pass_fraction(args.factor)
    ok = demo.monotone and demo.plain[-1] >= args.min_energy and frac >= args.min_fraction
    _finish(args, table, {"monotone": demo.monotone, "pass_fraction": frac,
                          "seeds_used": seeds})
    print(f"# monotone={demo.monotone} final_plain={demo.plain[-1]:.4g} "
          f"fraction>={args.factor}x={frac:.2f}", file=sys.stderr)
    return OK if ok else TOLERANCE_FAILURE


def cmd_augment(args) -> int:
    from . import augment
    from .tensorfield import read_container, write_container

    traj = read_container(args.container)
    rng = np.random.default_rng(args.seed)
    if traj.template.dim == 2:
        traj = augment.embed_trajectory(traj)
    group = augment.admissible_elements(traj.template.extents, args.keep_extents)
    if args.element is None:
        index = int(rng.integers(len(group)))
    elif 0 <= args.element < len(group):
        index = args.element
    else:
        raise UsageError(f"element index must be in [0, {len(group)})")
    element = group[index]
    traj = augment.apply_to_trajectory(traj, element, args.keep_extents)
    if args.time_stride > 1:
        traj = augment.stride_time(traj, args.time_stride, rng)
    write_container(traj, args.output)
    table = Table(["element", "perm", "signs", "det", "frames", "dt_index", "extents"])
    table.add(index, element.perm, element.signs, element.det, len(traj), traj.dt_index,
              traj.template.extents)
    _finish(args, table)
    return OK


def cmd_simulate_sched(args) -> int:
    from . import scheduler as sch

    if args.catalog:
        catalog = sch.parse_catalog(Path(args.catalog).read_text())
    else:
        catalog = sch.reference_catalog()
    cluster = sch.ClusterConfig(args.ranks, args.group_size)
    if args.compare:
        strategies = sch.STACKED
    else:
        strategies = (sch.Strategy(args.strategy, args.batch, args.accum),)
    table = Table(["strategy", "samples_per_time", "tokens_per_time", "idle_fraction",
                   "mean_step_time", "speedup_samples", "speedup_tokens"])
    base = None
    for strat in strategies:
        r = sch.simulate(strat, catalog, cluster, args.steps, args.seed)
        if base is None:
            base = r
        table.add(strat.label, r.throughput, r.token_throughput, r.idle_fraction,
                  r.mean_step_time, r.throughput / base.throughput,
                  r.token_throughput / base.token_throughput)
    _finish(args, table)
    return OK


def _load_config(path):
    defaults = {
        "model": "linear", "history": 2, "targets": None, "hidden": 4,
        "token_channels": 4, "train_steps": 200, "lr": 0.01, "task": "next",
        "train_frames": None,
    }
    if path is None:
        return defaults
    try:
        given = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: {exc}") from None
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"config {path}: unknown keys {sorted(unknown)}")
    defaults.update(given)
    return defaults


def _high_frequency_fraction(values) -> float:
    spec = np.abs(np.fft.fftn(values, axes=tuple(range(1, values.ndim)))) ** 2
    mask = np.zeros(values.shape[1:], dtype=bool)
    for a, n in enumerate(values.shape[1:]):
        k = np.abs(np.fft.fftfreq(n) * n)
        shape = [1] * mask.ndim
        shape[a] = n
        mask |= (k > n / 4).reshape(shape)
    total = spec.sum()
    return float(spec[:, mask].sum() / total) if total > 0 else 0.0


def cmd_rollout_eval(args) -> int:
    from . import emulator as emu
    from .metrics import field_mean, vrmse
    from .patching import plan_strides
    from .tensorfield import read_container

    cfg = _load_config(args.config)
    traj = read_container(args.container)
    rng = np.random.default_rng(args.seed)
    tau = int(cfg["history"])
    span = max(tau, 2)
    if len(traj) < span + args.horizon:
        raise UsageError(
            f"container has {len(traj)} frames; need {span} history + {args.horizon} horizon"
        )
    history = traj.replace_snapshots(traj.snapshots[:span])
    extents = traj.template.extents
    if cfg["model"] == "zero":
        model = emu.ZeroModel(tau)
    elif cfg["model"] == "linear":
        targets = tuple(cfg["targets"] or extents)
        plan = plan_strides(extents, targets, traj.boundary)
        model = emu.LinearPathModel.random(plan, traj.template.channels, tau, rng,
                                           int(cfg["hidden"]), int(cfg["token_channels"]))
        frames = int(cfg["train_frames"] or len(traj))
        train = traj.replace_snapshots(traj.snapshots[:frames])
        make = emu.identity_windows if cfg["task"] == "identity" else emu.next_step_windows
        windows = make(train, tau)
        model = emu.train_linear_path(model, windows, int(cfg["train_steps"]), float(cfg["lr"]),
                                      rng=rng, jitter=args.jitter).model
    else:
        raise ConfigError(f"unknown model {cfg['model']!r}; use 'linear' or 'zero'")
    rolled = emu.rollout(model, history, args.horizon, args.jitter, rng)
    preds = emu.predictions(rolled, history)
    reports = set(args.report)
    cols = ["step"]
    if "vrmse" in reports:
        cols += [f"vrmse_{n}" for n in traj.template.names] + ["vrmse_mean"]
    if "spectrum" in reports:
        cols += ["hf_fraction_pred", "hf_fraction_true"]
    table = Table(cols)
    for step, pred in enumerate(preds, start=1):
        truth = traj.snapshots[span + step - 1]
        row = [step]
        if "vrmse" in reports:
            per = vrmse(pred, truth)
            row += [per[n] for n in traj.template.names] + [field_mean(per)]
        if "spectrum" in reports:
            row += [_high_frequency_fraction(pred.values), _high_frequency_fraction(truth.values)]
        table.add(*row)
    _finish(args, table, {"config": cfg})
    return OK


def cmd_gen_synthetic(args) -> int:
    from .synthetic import gen_synthetic
    from .tensorfield import write_container

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = Table(["file", "kind", "extents", "steps", "seed"])
    for i in range(args.count):
        seed = args.seed + i
        traj = gen_synthetic(args.kind, args.extents, args.steps, seed, dt=args.dt)
        path = out / f"{args.kind}_{i:03d}.ckt"
        write_container(traj, path)
        table.add(path.name, args.kind, args.extents, args.steps, seed)
    _finish(args, table)
    return OK


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emulkit",
        description="Spectral checks, augmentation, scheduling and rollout tools "
                    "for patch-based PDE emulators.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=f"emulkit-out/{name}")
        p.set_defaults(func=func)
        return p

    p = add("spectral-check", cmd_spectral_check,
            "Compare frequency-domain resampling formulas against spatial oracles.")
    p.add_argument("--ns", "--n", dest="ns", type=_ints, default=(8, 12, 16, 32))
    p.add_argument("--ps", "--p", dest="ps", type=_ints, default=(1, 2, 4))
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--tol-scale", type=float, default=1.0,
                   help="multiply every tolerance by this factor")

    p = add("jitter-demo", cmd_jitter_demo,
            "Alias energy with and without patch jitter: an adversarial rollout "
            "(default) or one 2D frame through random linear patch weights.")
    p.add_argument("--mode", choices=("rollout", "single", "averaged"), default="rollout")
    p.add_argument("--plan", type=_ints, default=(2, 2, 2, 2),
                   help="p1,s1,p2,s2 for the single/averaged modes")
    p.add_argument("--boundary", choices=("periodic", "open", "closed"), default="periodic")
    p.add_argument("--n", type=int, default=None,
                   help="grid size (default 64 for rollout, 16 otherwise)")
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--k0", type=int, default=3)
    p.add_argument("--eps", type=float, default=0.02)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--factor", type=float, default=5.0)
    p.add_argument("--min-fraction", type=float, default=0.8)
    p.add_argument("--min-energy", type=float, default=1e-2)

    p = add("augment", cmd_augment,
            "Apply an octahedral element (and optional time stride) to a container.")
    p.add_argument("--container", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--element", type=int, default=None,
                   help="index into the admissible elements; random if omitted")
    p.add_argument("--time-stride", type=int, default=1)
    p.add_argument("--keep-extents", action="store_true")

    p = add("simulate-sched", cmd_simulate_sched,
            "Simulate training throughput under sampling and batching strategies.")
    p.add_argument("--catalog", default=None,
                   help="text file: name dim tokens attention_share [encoder_share]")
    p.add_argument("--strategy", choices=("naive", "tied"), default="naive")
    p.add_argument("--batch", choices=("uniform", "differential"), default="uniform")
    p.add_argument("--accum", type=int, default=1)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--ranks", type=int, default=96)
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--compare", action="store_true",
                   help="run the four stacked strategies instead")

    p = add("rollout-eval", cmd_rollout_eval,
            "Train a linear-path model on a container and report rollout metrics.")
    p.add_argument("--container", required=True)
    p.add_argument("--config", default=None, help="JSON file of model settings")
    p.add_argument("--jitter", type=_on_off, default=True)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--report", type=lambda s: tuple(s.split(",")), default=("vrmse",))

    p = add("gen-synthetic", cmd_gen_synthetic,
            "Write periodic advection trajectories as containers.")
    p.add_argument("--kind", choices=("advection", "pure-mode", "mixed"), default="advection")
    p.add_argument("--extents", type=_ints, default=(32, 32))
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--count", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return USAGE_ERROR
    try:
        return args.func(args)
    except (RolloutError, TrainingError) as exc:
        print(f"emulkit {args.command}: failed: {exc}", file=sys.stderr)
        return TOLERANCE_FAILURE
    except (OSError, ContainerError, ConfigError, DimensionError, PlanError,
            UsageError, IndexError, ValueError) as exc:
        print(f"emulkit {args.command}: error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
