"""Command line entry point: ``entfed run | check-theorems | dump-chain | codec``."""

from __future__ import annotations

import argparse
import struct
import sys
from pathlib import Path

import numpy as np

from .compression import Bitstream, Codebook, ahc_decode, compress_update, reconstruct
from .config import RunConfig, from_mapping, load_config
from .errors import ContractError, DecodeError
from .ledger import load_chain, verify_chain
from .orchestrator import check_theorems, run_experiment


def _cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.scenario:
        overrides["scenario"] = args.scenario
    if args.rounds is not None:
        overrides["rounds"] = args.rounds
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = from_mapping(overrides, base=cfg)
    out = args.out or cfg.output_dir or "entfed-out"
    res = run_experiment(cfg, out)
    s = res.summary
    acc = " ".join(f"{k}={v:.2f}" for k, v in s["final_accuracy"].items())
    print(f"scenario {s['scenario']}: {s['rounds']} rounds")
    print(f"final accuracy: {acc or 'n/a'}")
    print(f"bits c2s={s['cumulative_c2s']} s2c={s['cumulative_s2c']} total={s['cumulative_total']}")
    print(f"blacklisted: {' '.join(map(str, s['blacklisted'])) or 'none'}")
    print(f"outputs written to {out}")
    return 0


def _cmd_theorems(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    report = check_theorems(cfg, rounds=args.rounds)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def _cmd_dump_chain(args) -> int:
    chain = load_chain(args.chain)
    for b in chain.blocks:
        print(f"{b.index}\tround={b.round}\t{b.kind}\tminer={b.miner_id}\t"
              f"payload={len(b.payload)}B\thash={b.hash.hex()}")
    bad = verify_chain(chain)
    if bad is None:
        print(f"chain valid ({len(chain)} blocks)")
        return 0
    print(f"chain invalid: first bad block {bad}")
    return 1


def _read_values(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64).ravel()
    return np.array(path.read_text().split(), dtype=np.float64)


def _cmd_codec(args) -> int:
    src, dst = Path(args.input), Path(args.output)
    if args.action == "compress":
        values = _read_values(src)
        cb, stream, _ = compress_update(values, args.k, args.seed)
        dst.write_bytes(struct.pack(">I", cb.k) + cb.to_bytes() + stream.to_bytes())
        raw_bits = 64 * values.size
        packed = 8 * dst.stat().st_size
        print(f"{values.size} values, K={cb.k}: {packed} bits ({packed / max(raw_bits, 1):.1%} of raw)")
        return 0
    raw = src.read_bytes()
    if len(raw) < 4:
        raise DecodeError("compressed file shorter than its header")
    (k,) = struct.unpack(">I", raw[:4])
    cb = Codebook.from_bytes(raw[4:4 + 8 * k])
    values = reconstruct(cb, ahc_decode(Bitstream.from_bytes(raw[4 + 8 * k:])))
    dst.write_text("\n".join(repr(float(v)) for v in values) + ("\n" if values.size else ""))
    print(f"{values.size} values restored")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entfed", description="Federated learning protocol simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", nargs="?", help="key = value config file")
    run.add_argument("--out", help="output directory")
    run.add_argument("--scenario", choices=["fedanil_plus", "fedavg_baseline"])
    run.add_argument("--rounds", type=int)
    run.add_argument("--seed", type=int)
    run.set_defaults(fn=_cmd_run)

    th = sub.add_parser("check-theorems", help="convex monotonicity and mixing checks")
    th.add_argument("--config")
    th.add_argument("--rounds", type=int, default=None)
    th.set_defaults(fn=_cmd_theorems)

    dc = sub.add_parser("dump-chain", help="print and verify a chain dump")
    dc.add_argument("chain")
    dc.set_defaults(fn=_cmd_dump_chain)

    co = sub.add_parser("codec", help="compress or decompress a gradient file")
    co.add_argument("action", choices=["compress", "decompress"])
    co.add_argument("input")
    co.add_argument("output")
    co.add_argument("--k", type=int, default=5)
    co.add_argument("--seed", type=int, default=0)
    co.set_defaults(fn=_cmd_codec)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ContractError, DecodeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
