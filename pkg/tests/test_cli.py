import pytest

from clmac.cli import main


def test_bound(capsys):
    assert main(["bound", "--types", "6", "--channels", "3"]) == 0
    assert capsys.readouterr().out.strip() == "56"


def test_oracle(capsys):
    assert main(["oracle", "--instance", "scenarios/oracle_tdma.yaml"]) == 0
    out = capsys.readouterr().out
    assert "optimum objective 0.625000" in out and "FAIL" not in out


def test_run(tmp_path, capsys):
    scen = tmp_path / "s.yaml"
    scen.write_text(
        "version: 1\nname: tiny\nkind: fixed\nnum_channels: 1\nhorizon: 1200\n"
        "periods:\n  - interval: [0, T]\n    incumbents: ['TDMA(3,0,8)@1']\n"
    )
    assert main(["run", "--scenario", str(scen), "--agent", "random", "--seeds", "0,1", "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "tiny_random_summary.csv").exists()
    assert (tmp_path / "out" / "tiny_random_seed1_slots.csv").exists()


def test_bad_scenario_is_reported(tmp_path, capsys):
    scen = tmp_path / "s.yaml"
    scen.write_text("version: 9\n")
    assert main(["run", "--scenario", str(scen), "--agent", "random", "--out", str(tmp_path)]) == 2
    assert "unsupported scenario version" in capsys.readouterr().err


def test_bad_agent_kind():
    with pytest.raises(SystemExit):
        main(["run", "--scenario", "x", "--agent", "dqn", "--out", "o"])
