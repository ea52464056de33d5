import json

import numpy as np
import pytest

from conftest import simplex_like_sites
from hypervor.cli import EXIT_INPUT, EXIT_IO, EXIT_OK, EXIT_VIOLATION, main
from hypervor.dual_graph import DualGraph
from hypervor.kernel import ORIGIN, LorentzIsometry, exp_map
from hypervor.pipeline import graph_to_dot, graph_to_json, parse_graph, report_json, run_pipeline
from hypervor.scene import SCHEMA, SceneError, emit_scene, make_scene, parse_scene, resolve_seed, validate_scene


def scene_dict(**over):
    d = json.loads(emit_scene(make_scene([], simplex_like_sites(), seed=3)))
    d.update(over)
    return d


def write(tmp_path, data, name="scene.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(p)


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def test_round_trip():
    s = make_scene([LorentzIsometry.loxodromic(1.0, 0.2)], [ORIGIN], seed=7, word_length_cap=3)
    again = validate_scene(json.loads(emit_scene(s)))
    assert again.to_dict() == s.to_dict()


def test_unknown_and_missing_fields():
    with pytest.raises(SceneError, match=r"\$\.colour"):
        validate_scene(scene_dict(colour="red"))
    d = scene_dict()
    del d["epsilon"]
    with pytest.raises(SceneError, match=r"\$\.epsilon"):
        validate_scene(d)


def test_bad_matrix_is_named():
    good = LorentzIsometry.boost(0.5, 1).m.ravel().tolist()
    bad = np.diag([1.0, 2, 1, 1]).ravel().tolist()
    with pytest.raises(SceneError, match=r"generators\[1\]"):
        validate_scene(scene_dict(generators=[good, bad]))


def test_field_checks():
    with pytest.raises(SceneError, match="basepoints"):
        validate_scene(scene_dict(basepoints=[[0.5, 0, 0, 0]]))
    with pytest.raises(SceneError, match="mode"):
        validate_scene(scene_dict(mode="fast"))
    with pytest.raises(SceneError, match="seed"):
        validate_scene(scene_dict(seed=-1))
    with pytest.raises(SceneError, match="epsilon"):
        validate_scene(scene_dict(epsilon=0))
    with pytest.raises(SceneError, match="relators"):
        validate_scene(scene_dict(generators=[LorentzIsometry.boost(0.5, 1).m.ravel().tolist()], relators=[[1]]))


def test_identity_generator_is_a_trivial_group():
    s = validate_scene(scene_dict(generators=[np.eye(4).ravel().tolist()]))
    assert s.isometries() == []
    assert s.quotient_scene().is_trivial


def test_malformed_json_reports_position(tmp_path):
    with pytest.raises(SceneError, match="line 1"):
        parse_scene(write(tmp_path, "{not json"))


def test_seed_precedence(monkeypatch):
    s = make_scene([], [ORIGIN, exp_map(ORIGIN, [0.5, 0, 0])], seed=5)
    unseeded = make_scene([], [ORIGIN, exp_map(ORIGIN, [0.5, 0, 0])])
    monkeypatch.setenv("HYPERVOR_SEED", "11")
    assert resolve_seed(2, s) == 2
    assert resolve_seed(None, s) == 5
    assert resolve_seed(None, unseeded) == 11
    monkeypatch.delenv("HYPERVOR_SEED")
    assert resolve_seed(None, unseeded) == 0
    monkeypatch.setenv("HYPERVOR_SEED", "x")
    with pytest.raises(SceneError):
        resolve_seed(None, unseeded)


def test_pipeline_is_deterministic():
    s = make_scene([], simplex_like_sites(), seed=3)
    assert report_json(run_pipeline(s).report) == report_json(run_pipeline(s).report)


def test_graph_json_round_trip(cyclic_run):
    g = cyclic_run.graph
    data = graph_to_json(g, cyclic_run.dd_edges, cyclic_run.lengths)
    h = parse_graph(json.dumps(data))
    assert h.edges() == g.edges()
    assert graph_to_json(h) == graph_to_json(g)
    for a, b in zip(g.oriented, h.oriented):
        assert a.word == b.word and a.facet == b.facet
        assert np.allclose(a.matrix, b.matrix)


def test_dot_export():
    empty = graph_to_dot(DualGraph(0, []))
    assert empty.startswith("digraph") and "->" not in empty
    one = graph_to_dot(DualGraph.from_edges(2, [(0, 1)]), lengths=[0.75])
    assert one.count("->") == 1 and 'length="0.75"' in one and 'loop="false"' in one


def test_cli_scene_validate(tmp_path, capsys):
    path = write(tmp_path, scene_dict())
    code, out = run_cli(capsys, "scene", "validate", path)
    assert code == EXIT_OK and json.loads(out)["valid"]
    code, out = run_cli(capsys, "scene", "validate", path, "--emit")
    assert code == EXIT_OK and validate_scene(json.loads(out)).seed == 3
    assert run_cli(capsys, "scene", "validate", write(tmp_path, scene_dict(extra=1), "bad.json"))[0] == EXIT_INPUT
    assert run_cli(capsys, "scene", "validate", str(tmp_path / "missing.json"))[0] == EXIT_IO
    assert run_cli(capsys, "scene", "frobnicate")[0] == EXIT_INPUT


def test_cli_voronoi(tmp_path, capsys):
    path = write(tmp_path, scene_dict(truncation_radius=2.0))
    code, out = run_cli(capsys, "voronoi", "build", path)
    summary = json.loads(out)
    assert code == EXIT_OK and summary["schema"] == SCHEMA and len(summary["cells"]) == 4
    code, out = run_cli(capsys, "voronoi", "check", path)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["weakly_simple"] and rep["degenerate_quadruples"] == []


def test_cli_voronoi_check_flags_concyclic_scene(tmp_path, capsys):
    ring = [exp_map(ORIGIN, 0.8 * np.array([np.cos(a), np.sin(a), 0.0])) for a in (0.1, 1.7, 3.0, 4.4)]
    poles = [exp_map(ORIGIN, [0, 0, s * 0.9]) for s in (1, -1)]
    path = write(tmp_path, json.loads(emit_scene(make_scene([], ring + poles, truncation_radius=2.5, seed=1))))
    code, out = run_cli(capsys, "voronoi", "check", path)
    rep = json.loads(out)
    assert code == EXIT_VIOLATION and not rep["weakly_simple"]
    assert any(v["valence"] == 4 for v in rep["violators"])
    assert [0, 1, 2, 3] in rep["degenerate_quadruples"]
    code, out = run_cli(capsys, "voronoi", "check", path, "--perturb")
    assert code == EXIT_OK and json.loads(out)["attempts"] >= 1


def test_cli_graph_commands(tmp_path, capsys):
    path = write(tmp_path, scene_dict())
    code, out = run_cli(capsys, "graph", "build", path)
    assert code == EXIT_OK and len(parse_graph(out).edges()) == 6
    code, out = run_cli(capsys, "graph", "build", path, "--format", "dot")
    assert code == EXIT_OK and out.count("->") == 6
    for mode in ("derandomized", "exhaustive"):
        code, out = run_cli(capsys, "graph", "color", path, "--mode", mode)
        assert code == EXIT_OK and json.loads(out)["meets_one_sixteenth"]
    code, out = run_cli(capsys, "graph", "prune", path)
    assert code == EXIT_OK and json.loads(out)["dagger_connected"]


def test_cli_pipeline_run(tmp_path, capsys):
    path = write(tmp_path, scene_dict())
    out_file, graph_file = tmp_path / "report.json", tmp_path / "g.dot"
    code, _ = run_cli(capsys, "pipeline", "run", path, "--out", out_file, "--graph-out", graph_file)
    assert code == EXIT_OK
    rep = json.loads(out_file.read_text())
    assert rep["violations"] == [] and rep["bounds"]["betti_ok"]
    assert graph_file.read_text().startswith("digraph")
    code, out = run_cli(capsys, "pipeline", "run", path, "--seed", "9")
    assert json.loads(out)["seed"] == 9
    assert run_cli(capsys, "pipeline", "run", path, "--out", tmp_path / "no" / "such" / "dir.json")[0] == EXIT_IO


def test_cli_bounds(capsys):
    code, out = run_cli(capsys, "bounds", "rank", "--graph", 10, 2, 4, "--loop-ranks", 1, 0, 2, 1)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["betti_bound"] == "9/2"
    # 15/16 * 10 - 4 + 1 + (1 + 0 + 2 + 1)/16
    assert rep["rank_bound_graph"] == "53/8"
    code, out = run_cli(capsys, "bounds", "rank", "--volume", 10, "--rho", 4)
    vb = json.loads(out)["volume_bound"]
    assert vb["inner_floor"] == 314 and vb["inner_term"] == "2343/16"
    assert vb["bound"] == vb["corollary_bound"]
    code, out = run_cli(capsys, "bounds", "headline", "--volume", 1, "--case", "five_free")
    assert code == EXIT_OK and json.loads(out)["cases"][0]["bound"] == "158497/1000"


def test_cli_b_override_rules(capsys):
    assert run_cli(capsys, "bounds", "headline", "--b", "0.931")[0] == EXIT_INPUT
    assert run_cli(capsys, "bounds", "headline", "--b", "0.931", "--allow-b-override")[0] == EXIT_OK
    assert run_cli(capsys, "bounds", "headline", "--b", "0.95", "--allow-b-override")[0] == EXIT_INPUT
    assert run_cli(capsys, "bounds", "rank")[0] == EXIT_INPUT


def test_cli_log2k1(capsys):
    code, out = run_cli(capsys, "log2k1", "check", 1, 1, 1, 1, 1)
    assert code == EXIT_OK and json.loads(out)["verdict"] == "violates"
    code, out = run_cli(capsys, "log2k1", "check", 2.1, 2.1, "--mode", "k_free", "--k", 5)
    rep = json.loads(out)
    assert rep["verdict"] == "consistent" and rep["rho"]["rho"] == 4
    assert run_cli(capsys, "log2k1", "check", 1, "--mode", "k_free")[0] == EXIT_INPUT
    assert run_cli(capsys, "log2k1", "check", 3, "--mode", "k_free", "--k", 5)[0] == EXIT_INPUT
