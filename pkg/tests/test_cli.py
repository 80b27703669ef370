"""Command-line surface: artifacts, config resolution, reproducibility."""

import numpy as np
import pytest

from structwalk.cli import (load_embeddings, read_config_file, run,
                            save_embeddings)
from structwalk.graph import load_graph

TINY_TRAIN = ["--gamma", "10", "--l", "5", "--window", "2", "--neg-k", "3",
              "--s", "4", "--pattern-dim", "6", "--hidden", "12",
              "--out-dim", "8", "--batch-size", "32",
              "--triples-per-node", "2", "--max-iters", "6",
              "--patience", "6", "--seed", "0", "--threads", "1"]


def read_bytes_map(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def er_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("er")
    assert run(["synth", "er", "--n", "30", "--p", "0.15", "--seed", "0",
                "-o", str(d)]) == 0
    return d


@pytest.fixture(scope="module")
def triad_run(tmp_path_factory):
    gd = tmp_path_factory.mktemp("triad")
    rd = tmp_path_factory.mktemp("triad_train")
    assert run(["synth", "triad-circle", "--n", "8", "-o", str(gd)]) == 0
    assert run(["train", "--edges", str(gd / "edges.txt"),
                "--features", str(gd / "features.txt"),
                "-o", str(rd)] + TINY_TRAIN) == 0
    return gd, rd


class TestHelp:
    def test_top_level(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["--help"])
        assert exc.value.code == 0
        assert "walk-pattern" in capsys.readouterr().out

    @pytest.mark.parametrize("cmd", ["synth", "walks", "train",
                                     "eval-classify", "eval-linkpred",
                                     "project", "gradcheck", "bench-scaling"])
    def test_every_subcommand(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            run([cmd, "--help"])
        assert exc.value.code == 0
        assert "--threads" in capsys.readouterr().out


class TestConfigFile:
    def test_typed_round_trip(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("gamma = 25\nlr = 0.01\n# a comment\n\nl=4\n")
        cfg = read_config_file(path)
        assert cfg == {"gamma": 25, "lr": 0.01, "l": 4}
        assert isinstance(cfg["gamma"], int)
        assert isinstance(cfg["lr"], float)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("walk_length = 8\n")
        with pytest.raises(ValueError, match="unknown key"):
            read_config_file(path)

    def test_missing_equals(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("gamma 25\n")
        with pytest.raises(ValueError, match="key = value"):
            read_config_file(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("gamma = many\n")
        with pytest.raises(ValueError, match="bad value"):
            read_config_file(path)


class TestEmbeddingsIO:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        emb = rng.standard_normal((7, 5))
        ids = [f"v{i}" for i in range(7)]
        path = tmp_path / "emb.txt"
        save_embeddings(path, emb, ids)
        got_ids, got = load_embeddings(path)
        assert got_ids == ids
        assert np.array_equal(got, emb)
        assert path.read_text().splitlines()[0] == "7 5"

    def test_malformed_row_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 3\na 1 2 3\nb 1 2\n")
        with pytest.raises(ValueError, match="expected 3"):
            load_embeddings(path)


class TestSynth:
    def test_er_artifacts(self, er_dir):
        names = {p.name for p in er_dir.iterdir()}
        assert {"edges.txt", "features.txt", "config.resolved"} <= names
        assert "labels.txt" not in names
        g = load_graph(er_dir / "edges.txt", er_dir / "features.txt")
        assert g.num_nodes == 30

    def test_triad_circle_labels(self, triad_run):
        gd, _ = triad_run
        g = load_graph(gd / "edges.txt", None, gd / "labels.txt")
        assert g.num_nodes == 8 * 13
        assert (g.labels >= 0).sum() == 8

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert run(["synth", "er", "--n", "25", "--p", "0.2",
                        "--seed", "7", "--threads", "1", "-o", str(d)]) == 0
        assert read_bytes_map(a) == read_bytes_map(b)


class TestWalks:
    def test_distribution_files(self, er_dir, tmp_path):
        out = tmp_path / "w"
        assert run(["walks", "--edges", str(er_dir / "edges.txt"),
                    "--gamma", "10", "--l", "5", "--seed", "0",
                    "-o", str(out)]) == 0
        rows = (out / "node_dists.txt").read_text().splitlines()
        assert len(rows) == 30
        for row in rows:
            probs = [float(cell.split(":")[1]) for cell in row.split()[1:]]
            assert abs(sum(probs) - 1.0) < 1e-9
        gd = [float(line.split()[1])
              for line in (out / "graph_dist.txt").read_text().splitlines()]
        assert abs(sum(gd) - 1.0) < 1e-9

    def test_deterministic(self, er_dir, tmp_path):
        outs = []
        for name in ("w1", "w2"):
            out = tmp_path / name
            assert run(["walks", "--edges", str(er_dir / "edges.txt"),
                        "--gamma", "10", "--l", "5", "--seed", "3",
                        "--threads", "1", "-o", str(out)]) == 0
            outs.append(read_bytes_map(out))
        assert outs[0] == outs[1]


class TestTrain:
    def test_artifacts(self, triad_run):
        gd, rd = triad_run
        names = {p.name for p in rd.iterdir()}
        assert names == {"embeddings.txt", "loss.csv", "checkpoint.txt",
                         "config.resolved"}
        ids, emb = load_embeddings(rd / "embeddings.txt")
        assert emb.shape == (8 * 13, 8)
        g = load_graph(gd / "edges.txt")
        assert ids == list(g.node_ids)
        loss_rows = (rd / "loss.csv").read_text().splitlines()
        assert loss_rows[0] == "iter,node_loss,walk_loss,total"
        assert len(loss_rows) == 1 + 6

    def test_resolved_config_reflects_flags(self, triad_run):
        _, rd = triad_run
        resolved = dict(line.split(" = ")
                        for line in (rd / "config.resolved")
                        .read_text().splitlines())
        assert resolved["gamma"] == "10"
        assert resolved["max_iters"] == "6"
        assert resolved["mu"] == "0.1"
        assert resolved["backend"] in ("compiled", "python")

    def test_flag_overrides_config_file(self, er_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("gamma = 12\nl = 5\nmax_iters = 4\nhidden = 12\n"
                       "out_dim = 8\npattern_dim = 6\ns = 4\nwindow = 2\n"
                       "neg_k = 3\nbatch_size = 32\ntriples_per_node = 2\n")
        out = tmp_path / "run"
        assert run(["train", "--edges", str(er_dir / "edges.txt"),
                    "--features", str(er_dir / "features.txt"),
                    "--config", str(cfg), "--gamma", "10",
                    "-o", str(out)]) == 0
        resolved = dict(line.split(" = ")
                        for line in (out / "config.resolved")
                        .read_text().splitlines())
        assert resolved["gamma"] == "10"
        assert resolved["l"] == "5"
        assert resolved["max_iters"] == "4"

    def test_unknown_config_key_fails(self, er_dir, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("walk_count = 10\n")
        code = run(["train", "--edges", str(er_dir / "edges.txt"),
                    "--config", str(cfg), "-o", str(tmp_path / "x")])
        assert code == 1
        assert "unknown key" in capsys.readouterr().err

    def test_byte_identical_reruns(self, er_dir, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert run(["train", "--edges", str(er_dir / "edges.txt"),
                        "--features", str(er_dir / "features.txt"),
                        "-o", str(out)] + TINY_TRAIN) == 0
            outs.append(read_bytes_map(out))
        assert outs[0] == outs[1]


class TestEvalClassify:
    def test_report_and_csv(self, triad_run, tmp_path, capsys):
        gd, rd = triad_run
        out = tmp_path / "cls"
        code = run(["eval-classify", "--embeddings",
                    str(rd / "embeddings.txt"),
                    "--labels", str(gd / "labels.txt"),
                    "--repeats", "3", "--seed", "0", "-o", str(out)])
        assert code == 0
        assert "micro_f1" in capsys.readouterr().out
        lines = (out / "classify.csv").read_text().splitlines()
        assert lines[0] == "task,metric,mean,std,repeats"
        assert any(line.split(",")[1] == "macro_f1" for line in lines[1:])

    def test_disjoint_ids_fail(self, triad_run, tmp_path, capsys):
        _, rd = triad_run
        labels = tmp_path / "labels.txt"
        labels.write_text("nosuch closed\n")
        code = run(["eval-classify", "--embeddings",
                    str(rd / "embeddings.txt"), "--labels", str(labels)])
        assert code == 1
        assert "no labeled node" in capsys.readouterr().err


class TestProject:
    def test_pca_csv(self, triad_run, tmp_path):
        gd, rd = triad_run
        out = tmp_path / "proj"
        assert run(["project", "--embeddings", str(rd / "embeddings.txt"),
                    "--labels", str(gd / "labels.txt"), "-o", str(out)]) == 0
        lines = (out / "pca.csv").read_text().splitlines()
        assert lines[0] == "node_id,x,y,label"
        assert len(lines) == 1 + 8 * 13
        labeled = [line for line in lines[1:] if line.split(",")[3]]
        assert len(labeled) == 8


class TestGradcheck:
    def test_passes_and_reports(self, capsys):
        assert run(["gradcheck", "--n", "30", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "max relative error" in out
        assert "walk_table" in out


class TestEvalLinkpred:
    def test_smoke(self, er_dir, tmp_path, capsys):
        out = tmp_path / "lp"
        code = run(["eval-linkpred", "--edges", str(er_dir / "edges.txt"),
                    "--features", str(er_dir / "features.txt"),
                    "--frac", "0.1", "-o", str(out)] + TINY_TRAIN)
        assert code == 0
        assert "auc" in capsys.readouterr().out
        assert (out / "linkpred.csv").exists()


class TestBenchScaling:
    def test_small_sizes(self, tmp_path, capsys):
        out = tmp_path / "bench"
        code = run(["bench-scaling", "--sizes", "40,80", "--iters", "2",
                    "--gamma", "10", "--l", "5", "--seed", "0",
                    "-o", str(out)])
        assert code == 0
        assert "slope" in capsys.readouterr().out
        lines = (out / "scaling.csv").read_text().splitlines()
        assert lines[0].startswith("n,preprocess_s,train_s")
        assert len(lines) == 3
