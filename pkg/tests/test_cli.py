import csv
import re
import subprocess
import sys
from pathlib import Path

import pytest

from blockpipe import cli
from blockpipe.config import CSV_HEADER, load_config
from blockpipe.model import ConfigError, Mode

FAST = ["--duration", "1", "--rate", "50", "--accounts", "400", "--window", "32"]


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_writes_csv_and_dumps(tmp_path, capsys):
    # long enough for the first block to commit
    rc = cli.main(["run", "--out", str(tmp_path), "--name", "r", "--dump", "--events",
                   "--mode", "plusplus", *FAST, "--duration", "3"])
    assert rc == 0
    rows = read_rows(tmp_path / "r.csv")
    assert ",".join(rows[0]) == CSV_HEADER
    assert rows[-2][0] == "summary" and rows[-1][0] == "mean"
    assert (tmp_path / "r.ledger").read_text()
    assert (tmp_path / "r.state").read_text().startswith("acc")
    assert (tmp_path / "r.events").read_text()
    assert "success_tps=" in capsys.readouterr().out


def test_default_name_encodes_parameters(tmp_path):
    assert cli.main(["run", "--out", str(tmp_path), "--mode", "vanilla", "--bs", "256",
                     "--rw", "4", "--hr", "40%", "--hw", "0.1", "--hss", "2%", *FAST]) == 0
    assert (tmp_path / "vanilla_bs256_rw4_hr40_hw10_hss2.csv").exists()


def test_zero_duration_gives_header_and_summary(tmp_path):
    assert cli.main(["run", "--out", str(tmp_path), "--name", "z", "--duration", "0"]) == 0
    lines = (tmp_path / "z.csv").read_text().splitlines()
    assert lines == [CSV_HEADER, "summary,0,0,0,0,0", "mean,0.000,0.000,0.000,0.000,0.000"]


def test_output_directory_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv(cli.OUT_ENV, str(target))
    assert cli.main(["run", "--name", "e", *FAST]) == 0
    assert (target / "e.csv").exists()


def test_same_arguments_same_csv(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["run", "--out", str(tmp_path / d), "--name", "x", "--seed", "4",
                         *FAST]) == 0
    assert (tmp_path / "a" / "x.csv").read_text() == (tmp_path / "b" / "x.csv").read_text()


def test_grid_small_sweep(tmp_path):
    rc = cli.main(["grid", "--out", str(tmp_path), "--bs-list", "64", "--rw-list", "2",
                   "--hr-list", "0.1", "0.4", "--hw-list", "0.05", "--hss-list", "0.02",
                   *FAST])
    assert rc == 0
    rows = read_rows(tmp_path / "grid_summary.csv")
    assert rows[0][:7] == ["mode", "bs", "rw", "hr", "hw", "hss", "seed"]
    assert len(rows) == 1 + 2 * 2
    # each grid point gets its own seed; both modes of a point share it
    seeds = {(r[3], r[6]) for r in rows[1:]}
    assert len({s for _, s in seeds}) == 2
    assert {r[0] for r in rows[1:]} == {"vanilla", "plusplus"}


def test_grid_default_has_108_points():
    args = cli.build_parser().parse_args(["grid"])
    assert len(cli._grid_values(args)) == 108


def test_breakdown_lists_four_modes(tmp_path):
    assert cli.main(["breakdown", "--out", str(tmp_path), *FAST]) == 0
    rows = read_rows(tmp_path / "breakdown.csv")
    assert [r[0] for r in rows[1:]] == [m.value for m in cli.BREAKDOWN_MODES]


def test_scale_sweep(tmp_path):
    assert cli.main(["scale", "--out", str(tmp_path), "--modes", "vanilla",
                     "--channel-list", "1", "2", "--client-list", "1", *FAST]) == 0
    rows = read_rows(tmp_path / "scale.csv")
    assert [(r[1], r[2]) for r in rows[1:]] == [("1", "1"), ("2", "1")]
    assert (tmp_path / "scale_vanilla_ch2_cl1.csv").exists()


def test_microbench_both_families(tmp_path, capsys):
    assert cli.main(["microbench", "--family", "interleaved", "--n", "16",
                     "--out", str(tmp_path)]) == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert len(files) == 1
    rows = read_rows(tmp_path / files[0])
    assert ",".join(rows[0]) == cli.MICRO_HEADER
    assert [int(r[1]) for r in rows[1:]] == [8 + i for i in range(9)]
    assert all(int(r[2]) == 16 for r in rows[1:])
    assert cli.main(["microbench", "--family", "cycles", "--n", "64",
                     "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "32,32,62," in out


def test_bad_configuration_exits_2(tmp_path, capsys):
    assert cli.main(["run", "--out", str(tmp_path), "--mode", "turbo"]) == 2
    assert cli.main(["run", "--out", str(tmp_path), "--hr", "1.5"]) == 2
    assert cli.main(["run", "--out", str(tmp_path), "--config", str(tmp_path / "none.ini")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_runtime_failure_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", "--out", str(blocker / "sub"), *FAST]) == 3


def test_unusable_arguments_exit_2_via_argparse():
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--duration", "soon"])
    assert exc.value.code == 2


def test_ini_loading_and_aliases(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nmode = reorder-only\nduration = 5\nseed = 9\n"
                   "sim_abort_rule = block_id\ntamper_peers = peer0.org1\n"
                   "[batch]\nbs = 512\nmax_wait = 0.5\n"
                   "[workload]\nhr = 40%\nhw = 0.1\nhss = 1%\nrw = 8\n"
                   "[topology]\nchannels = 2\n[costs]\ncores = 2\n")
    cfg = load_config(ini)
    assert cfg.mode is Mode.REORDER_ONLY and cfg.duration == 5.0 and cfg.seed == 9
    assert cfg.batch.max_tx_count == 512 and cfg.batch.max_wait == 0.5
    w = cfg.workload
    assert (w.hot_read_prob, w.hot_write_prob, w.hot_set_fraction, w.rw) == (0.4, 0.1, 0.01, 8)
    assert w.seed == 9
    assert cfg.topology.channels == 2 and cfg.costs.cores == 2
    assert cfg.sim_abort_rule.value == "block_id" and cfg.tamper_peers == ("peer0.org1",)
    # command-line overrides win over the file
    assert load_config(ini, {"batch": {"bs": "256"}}).batch.max_tx_count == 256


def test_defaults_mirror_experiment_table():
    cfg = load_config()
    assert cfg.rate == 512 and cfg.duration == 90 and cfg.topology.channels == 1
    assert cfg.topology.clients_per_channel == 4
    assert cfg.batch.max_wait == 1.0 and cfg.batch.max_unique_keys == 16384
    assert cfg.batch.max_bytes == 2 * 1024 * 1024


@pytest.mark.parametrize("text", ["[run]\nspeed = 3\n", "[nope]\na = 1\n",
                                  "[batch]\nbs = -1\n", "[run]\nscheduler = fast\n",
                                  "[workload]\nhr = lots\n", "[run]\ncycle_search = all\n"])
def test_bad_ini_rejected(tmp_path, text):
    ini = tmp_path / "bad.ini"
    ini.write_text(text)
    with pytest.raises(ConfigError):
        load_config(ini)


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "blockpipe.cli", "run", "--out", str(tmp_path),
                          "--name", "m", "--duration", "0"], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "m.csv").exists()


def test_readme_ini_example_loads(tmp_path):
    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    ini = tmp_path / "readme.ini"
    ini.write_text(re.search(r"```ini\n(.*?)```", readme, re.S).group(1))
    cfg = load_config(ini)
    assert cfg.mode is Mode.PLUSPLUS and cfg.rate == 512 and cfg.scheduler == "virtual"
    assert cfg.workload.hot_read_prob == 0.4 and cfg.batch.max_tx_count == 1024
