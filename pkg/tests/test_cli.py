import json
import subprocess
import sys

import pytest

from conftest import soft_geometric
from npergm.cli import main, read_config_file
from npergm.graph import UndirectedGraph, write_edge_list


@pytest.fixture(scope="module")
def graph_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "g.txt"
    g = soft_geometric(61, seed=2, scale=0.5)  # odd: exercises the drop policy
    write_edge_list(g, path)
    return path


def _run(*argv):
    return main([str(a) for a in argv])


def test_factorize(tmp_path, capsys):
    assert _run("factorize", "--n", 6, "--check", "--output-dir", tmp_path) == 0
    out = capsys.readouterr().out
    assert out.count("round ") == 5 and "validation: ok" in out
    assert (tmp_path / "factorization.txt").exists()
    assert (tmp_path / "manifest.json").exists() and (tmp_path / "config.txt").exists()
    assert _run("factorize", "--n", 7, "--output-dir", tmp_path) == 3


def test_usage_errors(tmp_path, capsys):
    assert _run("fit-glm", "--bogus") == 2
    assert _run("nonsense") == 2
    assert _run("fit-glm", "--output-dir", tmp_path) == 2
    assert _run("fit-glm", "--input", tmp_path / "g.txt", "--drop-node", "maybe") == 2
    (tmp_path / "bad.cfg").write_text("unknown_key = 1\n")
    assert _run("fit-glm", "--config", tmp_path / "bad.cfg") == 2


def test_data_errors(tmp_path, graph_file):
    assert _run("fit-glm", "--input", tmp_path / "missing.txt", "--output-dir", tmp_path) == 3
    (tmp_path / "broken.txt").write_text("0 1\n1 two\n")
    assert _run("fit-glm", "--input", tmp_path / "broken.txt", "--output-dir", tmp_path) == 3
    assert _run("fit-glm", "--input", graph_file, "--drop-node", "none",
                "--output-dir", tmp_path) == 3


def test_config_file_and_override(tmp_path, graph_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# settings\ninput = {graph_file}\nglm_min_ones = 4\nworkers = 1\n")
    assert read_config_file(cfg)["glm_min_ones"] == "4"
    out = tmp_path / "o"
    assert _run("fit-glm", "--config", cfg, "--glm-min-ones", 5, "--output-dir", out) == 0
    text = (out / "config.txt").read_text()
    assert "glm_min_ones = 5" in text and f"input = {graph_file}" in text
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["glm_min_ones"] == 5 and "numpy" in man["versions"]
    assert {"glm_fits.csv", "glm_summary.csv"} <= set(man["artifacts"])


def test_pipeline_equals_composition(tmp_path, graph_file):
    common = ["--workers", 1, "--grid", 30]
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("pipeline", "--input", graph_file, "--output-dir", a, *common) == 0
    assert _run("fit-np", "--input", graph_file, "--output-dir", b, "--workers", 1) == 0
    assert _run("combine", "--models", b / "np_models.json", "--output-dir", b, *common) == 0
    assert _run("residuals", "--input", graph_file, "--combined", b / "combined.json",
                "--output-dir", b, "--workers", 1) == 0
    for name in ("np_models.json", "combined.json", "np_tally.csv", "residuals.csv", "curves.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    # a second identical run reproduces the JSON outputs byte for byte
    c = tmp_path / "c"
    assert _run("pipeline", "--input", graph_file, "--output-dir", c, *common) == 0
    for name in ("np_models.json", "combined.json"):
        assert (a / name).read_bytes() == (c / name).read_bytes()
    res = (a / "residuals.csv").read_text().splitlines()
    assert res[0] == "node,avg_pearson,degree" and len(res) == 62  # all 61 nodes


def test_combine_without_usable_models(tmp_path):
    g = UndirectedGraph(10, [(0, 1)])
    write_edge_list(g, tmp_path / "sparse.txt")
    out = tmp_path / "o"
    assert _run("pipeline", "--input", tmp_path / "sparse.txt", "--n", 10, "--output-dir", out,
                "--workers", 1) == 4
    assert (out / "glm_summary.csv").read_text().strip() == "parameter,mean,median,q05,q95"
    assert (out / "curves.csv").read_text().strip() == "curve,term,x,value"
    assert "no_fit,no fit (too few ones),9" in (out / "np_tally.csv").read_text()


def test_simulate_and_ego_net(tmp_path, graph_file, capsys):
    out = tmp_path / "s"
    assert _run("simulate", "--n", 30, "--sweeps", 5, "--theta=-5.4,0,0.2", "--seed", 1,
                "--output-dir", out) == 0
    assert len((out / "trace.csv").read_text().splitlines()) == 6
    assert _run("simulate", "--n", 30, "--theta", "1,2", "--output-dir", out) == 2
    assert _run("ego-net", "--input", graph_file, "--ego", 3, "--output-dir", out) == 0
    assert (out / "ego_3.txt").exists()
    assert _run("ego-net", "--input", graph_file, "--ego", 999, "--output-dir", out) == 3


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "npergm", "factorize", "--n", "4",
                        "--output-dir", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0 and "3 rounds" in r.stdout
