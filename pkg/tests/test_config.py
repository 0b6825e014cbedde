import pytest

from entfed.config import RunConfig, dump_config, from_mapping, load_config, to_mapping
from entfed.errors import ContractError


def test_defaults():
    cfg = RunConfig()
    assert cfg.scenario == "fedanil_plus" and cfg.lam == 1024
    assert cfg.thresholds.phi_low == -0.7 and cfg.thresholds.phi_high == 0.7
    assert cfg.attack.rate == cfg.hyper.malicious_rate == 0.2
    assert (cfg.ap_damping, cfg.alpha) == (0.9, 0.1)


def test_load_without_header(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nrounds = 7\nalpha = 0.5   ; inline\nattack_kind = label_flip\n"
                 "auto_k = off\ncollusion_group = 1, 2 3\n")
    cfg = load_config(p)
    assert cfg.hyper.rounds == 7 and cfg.alpha == 0.5
    assert cfg.attack.kind == "label_flip" and cfg.auto_k is False
    assert cfg.attack.collusion_group == (1, 2, 3)


def test_load_with_section(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("[run]\nenterprises = 12\nmalicious_rate = 0.1\n")
    cfg = load_config(p)
    assert cfg.hyper.enterprises == 12
    assert cfg.attack.rate == cfg.hyper.malicious_rate == 0.1


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("roundz = 3\n")
    with pytest.raises(ContractError, match="roundz"):
        load_config(p)


def test_missing_file():
    with pytest.raises(ContractError):
        load_config("/nonexistent/run.cfg")


@pytest.mark.parametrize("kv", [dict(scenario="other"), dict(lam=768), dict(alpha=0),
                                dict(k_min=9), dict(phi_low=0.9), dict(attack_kind="nope")])
def test_invalid_values(kv):
    with pytest.raises(ContractError):
        from_mapping(kv)


def test_dump_round_trip(tmp_path):
    cfg = from_mapping(dict(rounds=3, scenario="fedavg_baseline", collusion_group="4 5", auto_k="no"))
    p = tmp_path / "echo.cfg"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg
    assert to_mapping(cfg)["scenario"] == "fedavg_baseline"
