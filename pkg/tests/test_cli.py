import json

import numpy as np

from entfed.cli import main
from entfed.compression import Codebook, kmedoids


def _write_cfg(tmp_path, **extra):
    kv = dict(enterprises=9, rounds=2, lam=512, epochs=3, samples_per_enterprise=30,
              select_fraction=1.0, gml_steps=50, **extra)
    p = tmp_path / "run.cfg"
    p.write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))
    return p


def test_run_and_dump_chain(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "final accuracy" in text and "bits c2s=" in text
    for name in ("metrics.csv", "filters.csv", "config.txt", "summary.txt", "chain.jsonl"):
        assert (out / name).exists()
    assert main(["dump-chain", str(out / "chain.jsonl")]) == 0
    assert "chain valid" in capsys.readouterr().out

    lines = (out / "chain.jsonl").read_text().splitlines()
    rec = json.loads(lines[2])
    rec["round"] += 1
    lines[2] = json.dumps(rec)
    (out / "bad.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["dump-chain", str(out / "bad.jsonl")]) == 1
    assert "first bad block 2" in capsys.readouterr().out


def test_run_overrides(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert main(["run", str(cfg), "--out", str(tmp_path / "b"), "--scenario", "fedavg_baseline",
                 "--rounds", "1", "--seed", "3"]) == 0
    assert "scenario fedavg_baseline: 1 rounds" in capsys.readouterr().out
    assert not (tmp_path / "b" / "chain.jsonl").exists()


def test_check_theorems(capsys):
    assert main(["check-theorems", "--rounds", "20"]) == 0
    out = capsys.readouterr().out
    assert "monotonicity: PASS" in out and "mixing identity: PASS" in out


def test_codec_round_trip(tmp_path, capsys):
    x = np.random.default_rng(0).normal(size=500)
    src = tmp_path / "g.npy"
    np.save(src, x)
    packed, back = tmp_path / "g.bin", tmp_path / "g.txt"
    assert main(["codec", "compress", str(src), str(packed), "--k", "4"]) == 0
    assert main(["codec", "decompress", str(packed), str(back)]) == 0
    got = np.array(back.read_text().split(), dtype=float)
    cb, idx, _ = kmedoids(x, 4)
    np.testing.assert_array_equal(got, cb.heads[idx])
    raw = packed.read_bytes()
    assert int.from_bytes(raw[:4], "big") == 4
    np.testing.assert_array_equal(Codebook.from_bytes(raw[4:36]).heads, cb.heads)
    assert packed.stat().st_size * 8 < 0.25 * 64 * x.size


def test_codec_text_input(tmp_path):
    src = tmp_path / "v.txt"
    src.write_text("1.0 1.0 2.0\n2.0 9.0\n")
    assert main(["codec", "compress", str(src), str(tmp_path / "v.bin"), "--k", "2"]) == 0


def test_errors_exit_two(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
    (tmp_path / "junk.bin").write_bytes(b"\x00")
    assert main(["codec", "decompress", str(tmp_path / "junk.bin"), str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err
