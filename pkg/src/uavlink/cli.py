"""Command-line experiment runner.

Subcommands:
  simulate      one scheme at one SNR, per-slot reports to CSV
  sweep         BLER/throughput curves across SNR for several schemes
  train         joint Tx/Rx training, history CSV + checkpoints
  eval-image    send a PPM/PGM image through a chain, write recovery + metrics
  channel-dump  golden channel realization for regression comparisons

Global flags: --config FILE (JSON), --seed N, --out DIR. Exit codes:
0 success, 2 configuration error, 3 numerical failure (NaN detected).
"""

import argparse
import json
import os
import sys

import numpy as np

from .channel import ArrayConfig, LargeScaleParams, write_golden
from .checkpoint import load_into_module, save_module
from .errors import UavlinkError
from .geometry import GeometryState
from .harness import (DEFAULT_GEOMETRIES, LinkConfig, SchemeSpec, SweepConfig,
                      run_sweep, simulate_slot, slot_reports_csv, sweep_csv,
                      transmit_image)
from .ldpc import LdpcCode
from .metrics import psnr
from .modulation import ConstellationSpec
from .moduformer import ModuformerParams
from .rx_neural import DeepRxParams
from .seeding import substream
from .training import (LossConfig, TrainConfig, history_csv, ssim, train_e2e)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _link_from_config(cfg: dict) -> LinkConfig:
    sec = cfg.get("link", {})
    try:
        arrays = ArrayConfig(
            n_y=sec.get("n_y", 4), n_z=sec.get("n_z", 4), n_uav=sec.get("n_uav", 2))
        ls = LargeScaleParams(
            a_rician=sec.get("a_rician", 1.0), b_rician=sec.get("b_rician", 1.5),
            sigma_sh_db=sec.get("sigma_sh_db", 4.0),
            excess_los_db=sec.get("excess_los_db", 1.0),
            excess_nlos_db=sec.get("excess_nlos_db", 20.0),
            carrier_hz=sec.get("carrier_hz", 3.5e9))
        geoms = tuple(
            GeometryState(p_uav=tuple(g["p_uav"]), v_uav=tuple(g.get("v_uav", (0, 0, 0))),
                          h_bs=g.get("h_bs", 25.0))
            for g in sec.get("geometries", [])) or DEFAULT_GEOMETRIES
        return LinkConfig(arrays=arrays, large_scale=ls, geometries=geoms,
                          k_clusters=sec.get("k_clusters", 8),
                          delay_spread_s=sec.get("delay_spread_ns", 100) * 1e-9)
    except (KeyError, TypeError, UavlinkError, ValueError) as exc:
        raise ConfigError(f"bad link config: {exc}") from exc


def _scheme_from_config(entry: dict, seed: int) -> SchemeSpec:
    try:
        tx_params = rx_params = None
        if entry.get("tx", "qam") == "moduformer":
            tx_params = ModuformerParams.init(substream(seed, 101))
            if "tx_checkpoint" in entry:
                load_into_module(entry["tx_checkpoint"], tx_params)
        if entry.get("rx", "genie") == "deeprx":
            rx_params = DeepRxParams.init(substream(seed, 102))
            if "rx_checkpoint" in entry:
                load_into_module(entry["rx_checkpoint"], rx_params)
        return SchemeSpec(name=entry["name"], tx=entry.get("tx", "qam"),
                          rx=entry.get("rx", "genie"),
                          pattern=entry.get("pattern", "full"),
                          tx_params=tx_params, rx_params=rx_params)
    except (KeyError, FileNotFoundError, UavlinkError, ValueError) as exc:
        raise ConfigError(f"bad scheme config: {exc}") from exc


def _schemes_by_name(cfg: dict, seed: int) -> dict:
    return {e["name"]: _scheme_from_config(e, seed)
            for e in cfg.get("schemes", [])}


def _ensure_out(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def cmd_simulate(cfg, seed, out_dir):
    sec = cfg.get("simulate")
    if sec is None:
        raise ConfigError("config lacks a 'simulate' section")
    schemes = _schemes_by_name(cfg, seed)
    if sec.get("scheme") not in schemes:
        raise ConfigError(f"unknown scheme '{sec.get('scheme')}' in simulate section")
    scheme = schemes[sec["scheme"]]
    link = _link_from_config(cfg)
    code = LdpcCode.from_file()
    spec = ConstellationSpec.qam(4)
    snr_db = float(sec.get("snr_db", 0.0))
    n_slots = int(sec.get("n_slots", 10))
    reports = [simulate_slot(scheme, link, code, spec, snr_db, seed, 0, i)
               for i in range(n_slots)]
    csv = slot_reports_csv(reports)
    if any(not np.isfinite(r.llr_mean_abs) for r in reports):
        raise FloatingPointError("NaN in slot LLR statistics")
    path = os.path.join(_ensure_out(out_dir), "slot_reports.csv")
    with open(path, "w") as fh:
        fh.write(csv)
    bler = sum(r.block_errors for r in reports) / sum(r.n_blocks for r in reports)
    print(f"simulate: {n_slots} slots at {snr_db} dB, BLER {bler:.4g} -> {path}")


def cmd_sweep(cfg, seed, out_dir):
    sec = cfg.get("sweep")
    if sec is None:
        raise ConfigError("config lacks a 'sweep' section")
    schemes = list(_schemes_by_name(cfg, seed).values())
    if not schemes:
        raise ConfigError("sweep needs at least one scheme")
    link = _link_from_config(cfg)
    try:
        sweep_cfg = SweepConfig(
            snr_points_db=tuple(float(s) for s in sec["snr_points_db"]),
            blocks_per_point=int(sec.get("blocks_per_point", 100)),
            seed=seed, schemes=tuple(schemes), link=link)
    except (KeyError, UavlinkError) as exc:
        raise ConfigError(f"bad sweep config: {exc}") from exc
    result = run_sweep(sweep_cfg)
    if any(not np.isfinite(p.bler) for p in result.points):
        raise FloatingPointError("NaN BLER in sweep result")
    out = _ensure_out(out_dir)
    for scheme in schemes:
        path = os.path.join(out, f"sweep_{scheme.name}.csv")
        with open(path, "w") as fh:
            fh.write(sweep_csv(result, scheme.name))
        print(f"sweep: wrote {path}")
    for w in result.warnings:
        print(f"warning: {w}")


def cmd_train(cfg, seed, out_dir):
    sec = cfg.get("train", {})
    from .imaging import ImageSource
    img = sec.get("image", {})
    source = ImageSource(kind=img.get("kind", "gradient"),
                         width=int(img.get("width", 8)),
                         height=int(img.get("height", 8)),
                         path=img.get("path"))
    try:
        train_cfg = TrainConfig(
            iterations=int(sec.get("iterations", 500)),
            batch_size=int(sec.get("batch_size", 1)),
            learning_rate=float(sec.get("learning_rate", 2e-3)),
            seed=seed,
            snr_range_db=tuple(sec.get("snr_range_db", (-4.0, 4.0))),
            pattern=sec.get("pattern", "sparse"),
            use_moduformer=bool(sec.get("use_moduformer", True)),
            checkpoint_every=int(sec.get("checkpoint_every", 0)))
        loss_cfg = LossConfig(psi=float(sec.get("psi", 1.0)),
                              alpha=float(sec.get("alpha", 0.2)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc
    link = _link_from_config(cfg)
    out = _ensure_out(out_dir)

    def hook(step, tx_params, rx_params):
        save_module(os.path.join(out, f"tx_iter{step:06d}"), tx_params)
        save_module(os.path.join(out, f"rx_iter{step:06d}"), rx_params)

    tx_params, rx_params, history = train_e2e(
        train_cfg, loss_cfg, link, source,
        checkpoint_hook=hook if train_cfg.checkpoint_every else None)
    if any(not np.isfinite(r["L_total"]) for r in history):
        raise FloatingPointError("NaN in training history")
    hist_path = os.path.join(out, "history.csv")
    with open(hist_path, "w") as fh:
        fh.write(history_csv(history))
    save_module(os.path.join(out, "tx"), tx_params)
    save_module(os.path.join(out, "rx"), rx_params)
    print(f"train: {train_cfg.iterations} iterations, final L_total "
          f"{history[-1]['L_total']:.4f} -> {hist_path}")


def cmd_eval_image(cfg, seed, out_dir):
    sec = cfg.get("eval_image")
    if sec is None:
        raise ConfigError("config lacks an 'eval_image' section")
    from .ppm import read_image, write_image
    if not os.path.exists(sec.get("image_path", "")):
        raise ConfigError(f"image not found: {sec.get('image_path')}")
    schemes = _schemes_by_name(cfg, seed)
    if sec.get("scheme") not in schemes:
        raise ConfigError(f"unknown scheme '{sec.get('scheme')}' in eval_image section")
    scheme = schemes[sec["scheme"]]
    link = _link_from_config(cfg)
    image = read_image(sec["image_path"])
    recovered, reports = transmit_image(image, scheme, link,
                                        float(sec.get("snr_db", 4.0)), seed)
    if not np.all(np.isfinite(recovered)):
        raise FloatingPointError("NaN in recovered image")
    out = _ensure_out(out_dir)
    rec_path = os.path.join(out, "recovered.pgm")
    write_image(rec_path, recovered)
    metrics = {
        "psnr_db": psnr(image, recovered),
        "ssim": float(ssim(image, recovered).values) if min(image.shape) >= 7 else None,
        "bler": sum(r.block_errors for r in reports) / sum(r.n_blocks for r in reports),
        "n_slots": len(reports),
    }
    metrics_path = os.path.join(out, "metrics.json")
    with open(metrics_path, "w") as fh:
        json.dump({k: ("inf" if v == float("inf") else v) for k, v in metrics.items()},
                  fh, indent=1)
    print(f"eval-image: PSNR {metrics['psnr_db']} dB -> {rec_path}, {metrics_path}")


def cmd_channel_dump(cfg, seed, out_dir):
    sec = cfg.get("channel_dump", {})
    link = _link_from_config(cfg)
    from .harness import draw_channel
    rng = substream(seed, 0, 0, 0)
    real = draw_channel(link, rng)
    if not np.all(np.isfinite(real.h)):
        raise FloatingPointError("NaN in channel realization")
    out = _ensure_out(out_dir)
    path = os.path.join(out, sec.get("filename", "channel_golden.bin"))
    write_golden(path, real, seed)
    print(f"channel-dump: {real.h.shape} realization (kappa {real.kappa:.3f}) -> {path}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="uavlink",
                                     description="UAV A2G MIMO-OFDM link simulator")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "sweep", "train", "eval-image", "channel-dump"):
        sub.add_parser(name)
    args = parser.parse_args(argv)

    handlers = {
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "train": cmd_train,
        "eval-image": cmd_eval_image,
        "channel-dump": cmd_channel_dump,
    }
    try:
        cfg = _load_config(args.config)
        handlers[args.command](cfg, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
