import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from chicken_coop.cli import main
from chicken_coop.experiments import PopulationResult
from chicken_coop.metrics import DominanceDigraph
from chicken_coop.tables import hierarchy_rows, read_table, write_table

from conftest import sample_populations

EMERGE = """\
[emergence]
n_populations = 2
max_generations = 150
master_seed = 5

[hyper]
episodes_per_generation = 256
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


@pytest.fixture(scope="module")
def emerge_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("emerge")
    cfg = write(root, "e.ini", EMERGE)
    out = root / "out"
    assert main(["emerge", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


class TestEmerge:
    def test_outputs(self, emerge_run):
        _, out = emerge_run
        names = {p.name for p in out.iterdir()}
        assert {"manifest.json", "generations.csv", "hierarchies.csv", "snapshots"} <= names
        assert len(list((out / "snapshots").iterdir())) == 2 * 6
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "complete" and manifest["master_seed"] == 5
        listed = {o["path"] for o in manifest["outputs"]}
        assert "generations.csv" in listed and "snapshots/pop0001_agent05.json" in listed

    def test_rerun_byte_identical(self, emerge_run, tmp_path):
        cfg, out = emerge_run
        again = tmp_path / "again"
        assert main(["emerge", "--config", str(cfg), "--out", str(again)]) == 0
        for name in ("generations.csv", "hierarchies.csv"):
            assert (out / name).read_bytes() == (again / name).read_bytes()

    def test_rerun_from_manifest(self, emerge_run, tmp_path):
        _, out = emerge_run
        again = tmp_path / "again"
        assert main(["emerge", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
        assert (out / "hierarchies.csv").read_bytes() == (again / "hierarchies.csv").read_bytes()

    def test_seed_override(self, emerge_run, tmp_path):
        cfg, out = emerge_run
        other = tmp_path / "other"
        assert main(["emerge", "--config", str(cfg), "--out", str(other), "--seed", "6"]) == 0
        assert json.loads((other / "manifest.json").read_text())["master_seed"] == 6
        assert (out / "generations.csv").read_bytes() != (other / "generations.csv").read_bytes()

    def test_odd_agents(self, tmp_path, capsys):
        cfg = write(tmp_path, "bad.ini", "[emergence]\nn_agents = 5\n")
        out = tmp_path / "out"
        assert main(["emerge", "--config", str(cfg), "--out", str(out)]) == 1
        assert "n_agents" in capsys.readouterr().err
        assert not out.exists()

    def test_unknown_key_line(self, tmp_path, capsys):
        cfg = write(tmp_path, "bad.ini", "[emergence]\nn_populations = 1\nn_agnets = 6\n")
        assert main(["emerge", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
        err = capsys.readouterr().err
        assert "n_agnets" in err and "bad.ini:3" in err

    def test_nonempty_out(self, tmp_path):
        cfg = write(tmp_path, "e.ini", EMERGE)
        (tmp_path / "out").mkdir()
        (tmp_path / "out" / "x").write_text("keep")
        assert main(["emerge", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
        assert (tmp_path / "out" / "x").read_text() == "keep"

    def test_missing_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["emerge", "--out", "x"])
        assert exc.value.code == 1

    def test_console_script(self, emerge_run, tmp_path):
        _, out = emerge_run
        r = subprocess.run([sys.executable, "-m", "chicken_coop.cli", "analyze", "--results", str(out),
                            "--out", str(tmp_path / "a")], capture_output=True)
        assert r.returncode == 0, r.stderr


ABLATE = """\
[emergence]
max_generations = {g}
master_seed = 3

[hyper]
episodes_per_generation = 128

[ablation]
populations_per_point = 1
{grid}
"""


class TestAblate:
    def test_two_groups(self, tmp_path):
        cfg = write(tmp_path, "a.ini", ABLATE.format(g=40, grid="opa_grid = 0, 1"))
        out = tmp_path / "out"
        assert main(["ablate", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_table(out / "ablation_trajectories.csv")
        assert {r["opa"] for r in rows} == {"0.0", "1.0"}
        assert len(read_table(out / "ablation_final.csv")) == 2
        assert len(read_table(out / "ablation_correlation.csv")) == 1

    def test_grid_out_of_range(self, tmp_path, capsys):
        cfg = write(tmp_path, "a.ini", ABLATE.format(g=40, grid="opa_grid = 0, 1.2"))
        assert main(["ablate", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
        assert "opa_grid" in capsys.readouterr().err

    def test_default_grid(self, tmp_path):
        cfg = write(tmp_path, "a.ini", ABLATE.format(g=5, grid=""))
        out = tmp_path / "out"
        assert main(["ablate", "--config", str(cfg), "--out", str(out)]) == 0
        assert len({r["opa"] for r in read_table(out / "ablation_final.csv")}) == 11


TRANSMIT = """\
[emergence]
n_populations = 2
max_generations = 150
master_seed = 5

[hyper]
episodes_per_generation = 256

[naive_hyper]
episodes_per_generation = 256

[transmission]
n_source_populations = 1
repeats_per_population = {m}
k_values = {k}
"""


class TestTransmit:
    def test_single_row(self, emerge_run, tmp_path):
        _, snaps = emerge_run
        cfg = write(tmp_path, "t.ini", TRANSMIT.format(m=1, k="0"))
        out = tmp_path / "out"
        assert main(["transmit", "--config", str(cfg), "--out", str(out), "--snapshots", str(snaps)]) == 0
        rows = read_table(out / "dhtf_samples.csv")
        assert len(rows) == 1
        assert {"source_population", "repeat", "k", "dhtf", "converged"} <= set(rows[0])

    def test_summary_matches_samples(self, emerge_run, tmp_path):
        _, snaps = emerge_run
        cfg = write(tmp_path, "t.ini", TRANSMIT.format(m=3, k="0, 4"))
        out = tmp_path / "out"
        assert main(["transmit", "--config", str(cfg), "--out", str(out), "--snapshots", str(snaps)]) == 0
        samples = read_table(out / "dhtf_samples.csv")
        for row in read_table(out / "dhtf_summary.csv"):
            vals = [float(s["dhtf"]) for s in samples if s["k"] == row["k"] and s["converged"] == "1"]
            assert int(row["n_samples"]) == 3
            if vals:
                assert float(row["median"]) == float(np.median(vals))

    def test_k_too_large(self, emerge_run, tmp_path, capsys):
        _, snaps = emerge_run
        cfg = write(tmp_path, "t.ini", TRANSMIT.format(m=1, k="5"))
        assert main(["transmit", "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--snapshots", str(snaps)]) == 1
        assert "k_values" in capsys.readouterr().err

    def test_missing_snapshots(self, tmp_path):
        cfg = write(tmp_path, "t.ini", TRANSMIT.format(m=1, k="0"))
        out = tmp_path / "o"
        assert main(["transmit", "--config", str(cfg), "--out", str(out),
                     "--snapshots", str(tmp_path / "nowhere")]) != 0
        assert not out.exists()

    def test_unconverged_source(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        h = DominanceDigraph(6, frozenset({(0, 1)}))
        write_table(src / "hierarchies.csv", *hierarchy_rows([PopulationResult(0, False, 3, h, (0.5,) * 6)], 6))
        cfg = write(tmp_path, "t.ini", TRANSMIT.format(m=1, k="0"))
        out = tmp_path / "o"
        assert main(["transmit", "--config", str(cfg), "--out", str(out), "--snapshots", str(src)]) != 0
        assert not out.exists()


def results_dir(tmp_path, hierarchies, converged=None):
    d = tmp_path / "res"
    d.mkdir()
    converged = converged or [True] * len(hierarchies)
    pops = [PopulationResult(i, c, 10, h, tuple(float(x) for x in range(6)))
            for i, (h, c) in enumerate(zip(hierarchies, converged))]
    write_table(d / "hierarchies.csv", *hierarchy_rows(pops, 6))
    return d


class TestAnalyze:
    def run(self, tmp_path, d):
        out = tmp_path / "an"
        assert main(["analyze", "--results", str(d), "--out", str(out)]) == 0
        return out, read_table(out / "census.csv")[0]

    def test_single_linear(self, tmp_path):
        out, c = self.run(tmp_path, results_dir(tmp_path, [DominanceDigraph.from_order([5, 4, 3, 2, 1, 0])]))
        assert (c["distinct"], c["intransitive"]) == ("1", "0")
        ranks = read_table(out / "rank_aggressiveness.csv")
        assert [float(r["mean_aggressiveness"]) for r in ranks] == [5, 4, 3, 2, 1, 0]
        assert (out / "hierarchies.txt").read_text(encoding="utf-8") == "0\t5 ⇒ 4 ⇒ 3 ⇒ 2 ⇒ 1 ⇒ 0\n"

    def test_worked_example(self, tmp_path):
        out, c = self.run(tmp_path, results_dir(tmp_path, sample_populations()))
        assert (c["distinct"], c["intransitive"]) == ("4", "1")
        profile = [float(r["linearity"]) for r in read_table(out / "rank_linearity.csv")]
        assert profile == [1, 0.75, 0.75, 0.75, 1, 1]
        assert "{1,3,5}" in (out / "hierarchies.txt").read_text(encoding="utf-8")

    def test_census_bounded(self, emerge_run, tmp_path):
        _, res = emerge_run
        _, c = self.run(tmp_path, res)
        n = int(c["n_populations"])
        assert int(c["n_converged"]) <= n and int(c["distinct"]) <= n and int(c["intransitive"]) <= n

    def test_missing_results(self, tmp_path):
        assert main(["analyze", "--results", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 1

    def test_inputs_untouched(self, emerge_run, tmp_path):
        _, res = emerge_run
        before = {p: p.read_bytes() for p in Path(res).rglob("*") if p.is_file()}
        self.run(tmp_path, res)
        assert before == {p: p.read_bytes() for p in Path(res).rglob("*") if p.is_file()}
