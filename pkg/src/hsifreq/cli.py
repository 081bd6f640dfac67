"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error.  All subcommands are
deterministic for explicit seeds and never mutate their input files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .cassi import SensingConfig, random_mask, simulate
from .correlation import (correlation_maps, corpus_stats, token_correlation,
                          write_maps_csv, write_token_csv)
from .gaptv import GapTvConfig, gap_tv
from .hsio import SceneSpec, export_heatmap, gen_scene, read_hsic, write_hsic
from .metrics import count_flops, count_params, evaluate, write_metrics_csv
from .unfolding import TrainConfig, UnfoldingNet, train, write_train_log


def _load_cube(path) -> np.ndarray:
    return read_hsic(path).astype(np.float64)


def _load_mask(path) -> np.ndarray:
    m = read_hsic(path)
    if m.shape[2] != 1:
        raise ValueError(f"mask file {path} must have C=1, got C={m.shape[2]}")
    return m[:, :, 0].astype(np.float64)


def _load_measurement(path) -> np.ndarray:
    y = read_hsic(path)
    if y.shape[2] != 1:
        raise ValueError(f"measurement file {path} must have C=1, got C={y.shape[2]}")
    return y[:, :, 0].astype(np.float64)


def _collect_cubes(data) -> list[np.ndarray]:
    p = Path(data)
    if p.is_dir():
        files = sorted(p.glob("*.hsic"))
        if not files:
            raise ValueError(f"no .hsic files in {p}")
        return [_load_cube(f) for f in files]
    return [_load_cube(p)]


def cmd_gen_scene(args) -> int:
    spec = SceneSpec(kind=args.kind, height=args.height, width=args.width,
                     bands=args.bands, seed=args.seed, rho=args.rho)
    write_hsic(gen_scene(spec), args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_gen_mask(args) -> int:
    mask = random_mask(args.height, args.width, seed=args.seed,
                       binary=not args.real, density=args.density)
    write_hsic(mask[:, :, None], args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cube = _load_cube(args.inp)
    mask = _load_mask(args.mask)
    cfg = SensingConfig(mask, dispersion_step=args.d, bands=cube.shape[2],
                        noise_sigma=args.sigma)
    y = simulate(cube, cfg, seed=args.seed)
    write_hsic(y[:, :, None], args.out)
    print(f"wrote {args.out} ({y.shape[0]}x{y.shape[1]})")
    return 0


def cmd_analyze_hfc(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cube = _load_cube(args.inp[0])
    rep = correlation_maps(cube)
    write_maps_csv(rep, out / "corr_maps.csv")
    export_heatmap(np.nan_to_num(rep.space_map), out / "space_map.pgm", -1.0, 1.0)
    export_heatmap(np.nan_to_num(rep.freq_map), out / "freq_map.pgm", -1.0, 1.0)
    curve = token_correlation(cube, args.token)
    write_token_csv(curve, out / "token_curve.csv")
    print(f"space_avg={rep.space_avg:.4f} freq_avg={rep.freq_avg:.4f} "
          f"tokens={len(curve.mean_corr)}")
    if len(args.inp) > 1:
        corpus_stats(args.inp, out_csv=out / "corpus_hist.csv")
        print(f"corpus histogram over {len(args.inp)} cubes -> corpus_hist.csv")
    return 0


def _train_config_from(args) -> TrainConfig:
    return TrainConfig(stages=args.stages, share_params=args.share, steps=args.steps,
                       batch=args.batch, lr0=args.lr0, seed=args.seed,
                       token=args.token, heads=args.heads, noise_sigma=args.sigma,
                       augment=not args.no_augment)


def _training_mask(args, cubes) -> np.ndarray:
    if args.mask:
        return _load_mask(args.mask)
    hmin = min(c.shape[0] for c in cubes)
    wmin = min(c.shape[1] for c in cubes)
    side = min(hmin, wmin, args.crop) // (2 * args.token) * (2 * args.token)
    if side < 2 * args.token:
        raise ValueError(f"cubes too small for token size {args.token}")
    return random_mask(side, side, seed=args.seed)


def cmd_train(args) -> int:
    cubes = _collect_cubes(args.data)
    mask = _training_mask(args, cubes)
    tcfg = _train_config_from(args)
    log_path = args.log or str(Path(args.out).with_suffix(".log.csv"))
    result = train(cubes, mask, tcfg, log_path=log_path, ckpt_path=args.out)
    last = result.log[-1] if result.log else (0, 0.0, float("nan"), float("nan"))
    tag = " (interrupted)" if result.interrupted else ""
    print(f"trained {tcfg.steps} steps in {result.elapsed:.1f}s{tag}: "
          f"loss={last[2]:.5g} psnr={last[3]:.2f}dB -> {args.out}")
    return 0


def cmd_reconstruct(args) -> int:
    y = _load_measurement(args.y)
    if args.method == "gap-tv":
        if not args.mask:
            raise ValueError("reconstruct --method gap-tv needs --mask and --bands")
        mask = _load_mask(args.mask)
        cfg = SensingConfig(mask, dispersion_step=args.d, bands=args.bands)
        cube = gap_tv(y, cfg, GapTvConfig(iterations=args.iters,
                                          tv_weight=args.tv_weight))
    else:
        if not args.ckpt:
            raise ValueError("reconstruct needs --ckpt (or --method gap-tv)")
        net = UnfoldingNet.load(args.ckpt)
        cube = net.reconstruct(y)
    write_hsic(cube, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_metrics(args) -> int:
    gt = _load_cube(args.gt)
    pred = _load_cube(args.pred)
    rep = evaluate(pred, gt)
    if args.out:
        write_metrics_csv([(Path(args.pred).stem, rep)], args.out)
    print(f"psnr={rep.psnr_mean:.4f}dB ssim={rep.ssim_mean:.6f} fdg={rep.fdg:.6f}")
    return 0


def cmd_sweep_kernel(args) -> int:
    cubes = _collect_cubes(args.data)
    rows = ["kernel,psnr,loss"]
    for k in (int(v) for v in args.kernels.split(",")):
        a = argparse.Namespace(**vars(args))
        a.token = k
        mask = _training_mask(a, cubes)
        tcfg = _train_config_from(a)
        result = train(cubes, mask, tcfg)
        rows.append(f"{k},{result.log[-1][3]:.4f},{result.log[-1][2]:.6g}")
        print(rows[-1])
    Path(args.out).write_text("\n".join(rows) + "\n")
    return 0


def cmd_sweep_sharing(args) -> int:
    cubes = _collect_cubes(args.data)
    rows = ["share_params,stages,params,psnr,loss"]
    for share in (True, False):
        a = argparse.Namespace(**vars(args))
        a.share = share
        mask = _training_mask(args, cubes)
        tcfg = _train_config_from(a)
        result = train(cubes, mask, tcfg)
        rows.append(f"{share},{args.stages},{result.net.param_count()},"
                    f"{result.log[-1][3]:.4f},{result.log[-1][2]:.6g}")
        print(rows[-1])
    Path(args.out).write_text("\n".join(rows) + "\n")
    return 0


def cmd_export_maps(args) -> int:
    net = UnfoldingNet.load(args.ckpt)
    y = _load_measurement(args.y)
    net.forward(y)  # populates per-block attention snapshots
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for pi, prior in enumerate(net.priors):
        for bname in ("enc", "mid", "dec"):
            block = getattr(prior, bname)
            gate = 1.0 / (1.0 + np.exp(-block.gate_logits.value.data))
            export_heatmap(gate, out / f"gate_p{pi}_{bname}.pgm", 0.0, 1.0)
            if block.freq_attn.last_attn is not None:
                export_heatmap(block.freq_attn.last_attn.mean(axis=0),
                               out / f"freq_attn_p{pi}_{bname}.pgm")
            if block.space_attn.last_attn is not None:
                export_heatmap(block.space_attn.last_attn.mean(axis=0),
                               out / f"space_attn_p{pi}_{bname}.pgm")
    n_params = count_params(net.config)
    flops = count_flops(net.config)
    print(f"exported maps for {len(net.priors)} prior(s) to {out} "
          f"(params={n_params:.4f}M, flops={flops:.2f}G at "
          f"{net.config.height}x{net.config.width})")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hsifreq",
                description="Snapshot spectral imaging toolkit: synthesis, "
                            "frequency-correlation analysis, training-free and "
                            "trained reconstruction, metrics.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="write a synthetic scene cube")
    g.add_argument("--kind", default="rank1-smooth")
    g.add_argument("--h", dest="height", type=int, default=32)
    g.add_argument("--w", dest="width", type=int, default=32)
    g.add_argument("--c", dest="bands", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rho", type=float, default=0.9)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_scene)

    g = sub.add_parser("gen-mask", help="write a coded-aperture mask (HSIC, C=1)")
    g.add_argument("--h", dest="height", type=int, default=32)
    g.add_argument("--w", dest="width", type=int, default=32)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--real", action="store_true", help="real-valued instead of binary")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_mask)

    g = sub.add_parser("simulate", help="simulate a snapshot measurement")
    g.add_argument("--in", dest="inp", required=True)
    g.add_argument("--mask", required=True)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_simulate)

    g = sub.add_parser("analyze-hfc",
                       help="spectral correlation maps, token curve, heatmaps")
    g.add_argument("--in", dest="inp", action="append", required=True)
    g.add_argument("--token", type=int, default=8)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_analyze_hfc)

    def add_train_flags(g):
        g.add_argument("--stages", type=int, default=3)
        g.add_argument("--share", action=argparse.BooleanOptionalAction, default=True)
        g.add_argument("--steps", type=int, default=2000)
        g.add_argument("--batch", type=int, default=1)
        g.add_argument("--lr0", type=float, default=4e-4)
        g.add_argument("--seed", type=int, default=0)
        g.add_argument("--token", type=int, default=8)
        g.add_argument("--heads", type=int, default=4)
        g.add_argument("--sigma", type=float, default=0.0)
        g.add_argument("--no-augment", action="store_true")
        g.add_argument("--mask", default=None)
        g.add_argument("--crop", type=int, default=32)

    g = sub.add_parser("train", help="train an unfolding reconstructor")
    g.add_argument("--data", required=True, help="directory of .hsic cubes or one file")
    add_train_flags(g)
    g.add_argument("--out", required=True, help="checkpoint path (.cmdw)")
    g.add_argument("--log", default=None, help="training log CSV path")
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("reconstruct", help="reconstruct a cube from a measurement")
    g.add_argument("--y", required=True)
    g.add_argument("--ckpt", default=None)
    g.add_argument("--method", choices=("ckpt", "gap-tv"), default="ckpt")
    g.add_argument("--mask", default=None)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--bands", type=int, default=28)
    g.add_argument("--iters", type=int, default=100)
    g.add_argument("--tv-weight", type=float, default=0.07)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_reconstruct)

    g = sub.add_parser("metrics", help="PSNR/SSIM/frequency-gap of a reconstruction")
    g.add_argument("--gt", required=True)
    g.add_argument("--pred", required=True)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_metrics)

    g = sub.add_parser("sweep-kernel", help="train small models over token sizes")
    g.add_argument("--data", required=True)
    g.add_argument("--kernels", default="2,4,8")
    add_train_flags(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_sweep_kernel)

    g = sub.add_parser("sweep-sharing", help="train with and without stage sharing")
    g.add_argument("--data", required=True)
    add_train_flags(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_sweep_sharing)

    g = sub.add_parser("export-maps",
                       help="gate heatmaps and attention maps from a checkpoint")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--y", required=True)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_export_maps)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        return args.func(args) or 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
