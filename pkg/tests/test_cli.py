"""Command-line interface: end-to-end flows, exit codes, manifests."""

import json
import re

import numpy as np
import pytest

from xvsmc.cli import main
from xvsmc.ring import FixedPointConfig
from xvsmc.xvector import random_graph, read_embedding, write_features, \
    write_weights

from conftest import rng_for, small_layers

CFG = FixedPointConfig()


@pytest.fixture()
def workspace(tmp_path):
    """A tiny graph and matching features written to disk."""
    rng = rng_for("cli_workspace")
    graph = random_graph(rng, small_layers(), weight_scale=0.3)
    feats = rng.normal(0, 1, (16, 5))
    wpath = tmp_path / "model.xvw"
    fpath = tmp_path / "input.xvf"
    write_weights(wpath, graph)
    write_features(fpath, feats)
    return tmp_path, wpath, fpath


class TestHappyPaths:
    def test_local_reference_compare_round(self, workspace, capsys):
        tmp, wpath, fpath = workspace
        sec = tmp / "secure.xve"
        ref = tmp / "reference.xve"
        assert main(["local", "--scheme", "rss3", "--weights", str(wpath),
                     "--features", str(fpath), "--out", str(sec)]) == 0
        assert main(["reference", "--weights", str(wpath),
                     "--features", str(fpath), "--out", str(ref)]) == 0
        assert main(["compare", str(sec), str(ref)]) == 0
        out = capsys.readouterr().out
        rel = float(re.search(r"relative_mse (\S+)", out).group(1))
        assert rel <= 1e-4

    def test_local_writes_manifest_sidecar(self, workspace):
        tmp, wpath, fpath = workspace
        out = tmp / "e.xve"
        main(["local", "--scheme", "additive2", "--weights", str(wpath),
              "--features", str(fpath), "--out", str(out), "--seed", "9"])
        manifest = json.loads((tmp / "e.xve.manifest.json").read_text())
        assert manifest["scheme"] == "additive2"
        assert manifest["seed"] == 9
        assert manifest["input_shape"] == [16, 5]
        assert manifest["config"] == {"f": 15, "m": 16, "s": 40}

    def test_dealer_then_local_with_material(self, workspace, capsys):
        tmp, wpath, fpath = workspace
        mat = tmp / "material"
        assert main(["dealer", "--scheme", "rss3", "--graph", str(wpath),
                     "--frames", "16", "--out", str(mat), "--seed", "2"]) == 0
        table = capsys.readouterr().out
        assert "trunc_dete" in table and "bytes/party" in table
        assert main(["local", "--scheme", "rss3", "--weights", str(wpath),
                     "--features", str(fpath), "--material", str(mat),
                     "--out", str(tmp / "e.xve")]) == 0

    def test_dealer_budget_table_matches_consumption(self, workspace, capsys):
        from xvsmc.preprocessing import MODE_DET
        from xvsmc.runner import run_local
        from xvsmc.xvector import quantize_weights, predict_budget, read_weights
        tmp, wpath, fpath = workspace
        mat = tmp / "mat"
        main(["dealer", "--scheme", "additive2", "--graph", str(wpath),
              "--frames", "16", "--out", str(mat)])
        table = capsys.readouterr().out
        triple_row = re.search(r"^triple\s+(\d+)", table, re.M)
        graph = read_weights(wpath)
        budget = predict_budget(quantize_weights(graph, CFG), 16, "additive2",
                                CFG, MODE_DET)
        assert int(triple_row.group(1)) == budget.triples
        rng = rng_for("cli_budget")
        result = run_local(graph, rng.normal(0, 1, (16, 5)), "additive2", CFG)
        assert result.consumption[0].triples == budget.triples

    def test_compare_identical_files_reports_zero(self, workspace, capsys):
        tmp, wpath, fpath = workspace
        ref = tmp / "r.xve"
        main(["reference", "--weights", str(wpath), "--features", str(fpath),
              "--out", str(ref)])
        capsys.readouterr()
        assert main(["compare", str(ref), str(ref)]) == 0
        out = capsys.readouterr().out
        assert "mse 0.000000e+00" in out
        assert "relative_mse 0.000000e+00" in out
        assert "max_abs_diff 0.000000e+00" in out

    def test_compare_orthogonal_unit_vectors(self, tmp_path, capsys):
        from xvsmc.xvector import write_embedding
        a = np.zeros(8)
        b = np.zeros(8)
        a[0] = 1.0
        b[1] = 1.0
        write_embedding(tmp_path / "a.xve", a)
        write_embedding(tmp_path / "b.xve", b)
        main(["compare", str(tmp_path / "a.xve"), str(tmp_path / "b.xve")])
        out = capsys.readouterr().out
        rel = float(re.search(r"relative_mse (\S+)", out).group(1))
        assert rel == pytest.approx(2.0)

    def test_bench_emits_machine_readable_lines(self, workspace, capsys):
        tmp, wpath, _ = workspace
        assert main(["bench", "--scheme", "additive2", "--weights", str(wpath),
                     "--frames-list", "16", "--repeats", "2"]) == 0
        out = capsys.readouterr().out
        m = re.search(r"BENCH scheme=additive2 mode=det frames=16 repeats=2 "
                      r"offline_s=\S+ online_s=\S+ online_bytes=(\d+) rounds=\d+",
                      out)
        assert m and int(m.group(1)) > 0


class TestDeterminism:
    def test_equal_manifests_give_identical_embeddings(self, workspace):
        tmp, wpath, fpath = workspace
        outs = []
        for name in ("one.xve", "two.xve"):
            out = tmp / name
            assert main(["local", "--scheme", "rss3", "--weights", str(wpath),
                         "--features", str(fpath), "--out", str(out),
                         "--mode", "det", "--seed", "77"]) == 0
            outs.append(out)
        assert outs[0].read_bytes() == outs[1].read_bytes()
        m1 = json.loads((tmp / "one.xve.manifest.json").read_text())
        m2 = json.loads((tmp / "two.xve.manifest.json").read_text())
        for key in ("scheme", "config", "graph_hash", "input_shape", "seed", "mode"):
            assert m1[key] == m2[key]

    def test_cross_scheme_embeddings_bit_identical_in_det_mode(self, workspace):
        tmp, wpath, fpath = workspace
        paths = {}
        for scheme in ("additive2", "rss3"):
            out = tmp / f"{scheme}.xve"
            assert main(["local", "--scheme", scheme, "--weights", str(wpath),
                         "--features", str(fpath), "--out", str(out),
                         "--mode", "det", "--seed", "5"]) == 0
            paths[scheme] = out
        np.testing.assert_array_equal(read_embedding(paths["additive2"]),
                                      read_embedding(paths["rss3"]))


class TestExitCodes:
    def test_missing_weight_file_is_usage_error(self, tmp_path, capsys):
        code = main(["reference", "--weights", str(tmp_path / "absent.xvw"),
                     "--features", str(tmp_path / "absent.xvf"),
                     "--out", str(tmp_path / "o.xve")])
        assert code == 2

    def test_frames_below_minimum_is_usage_error(self, workspace):
        tmp, wpath, _ = workspace
        assert main(["dealer", "--scheme", "rss3", "--graph", str(wpath),
                     "--frames", "4", "--out", str(tmp / "mat")]) == 2

    def test_short_material_is_underflow(self, workspace):
        tmp, wpath, fpath = workspace
        mat = tmp / "short"
        # deal for the smallest legal run, then ask for a larger one
        assert main(["dealer", "--scheme", "rss3", "--graph", str(wpath),
                     "--frames", "16", "--out", str(mat)]) == 0
        rng = rng_for("underflow_feats")
        write_features(tmp / "big.xvf", rng.normal(0, 1, (24, 5)))
        code = main(["local", "--scheme", "rss3", "--weights", str(wpath),
                     "--features", str(tmp / "big.xvf"),
                     "--material", str(mat), "--out", str(tmp / "e.xve")])
        assert code == 4

    def test_role_conflict_is_usage_error(self, workspace, tmp_path):
        tmp, wpath, fpath = workspace
        cfgfile = tmp_path / "p.cfg"
        cfgfile.write_text("party_id = 0\nscheme = rss3\n"
                           "listen = 127.0.0.1:19999\n")
        code = main(["party", "--config", str(cfgfile), "--weights", str(wpath),
                     "--features", str(fpath)])
        assert code == 2

    def test_vendor_id_mismatch_is_usage_error(self, workspace, tmp_path):
        tmp, wpath, _ = workspace
        cfgfile = tmp_path / "p.cfg"
        cfgfile.write_text("party_id = 0\nscheme = rss3\n"
                           "listen = 127.0.0.1:19999\n")
        # --weights marks the vendor, but party 0 is not the vendor (party 1)
        code = main(["party", "--config", str(cfgfile), "--weights", str(wpath),
                     "--frames", "16"])
        assert code == 2

    def test_corrupt_embedding_file_is_usage_error(self, tmp_path):
        bad = tmp_path / "bad.xve"
        bad.write_bytes(b"JUNKJUNK")
        assert main(["compare", str(bad), str(bad)]) == 2
