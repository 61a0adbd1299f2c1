"""Smoke test for the Python extension. Run with `python python/smoke_test.py`
or under pytest after `pip install --no-build-isolation -e crates/py`."""

import json
import math
import pathlib
import tempfile

import urbanlayout as ul


def grid(n, spacing):
    g = ul.RoadGraph()
    for r in range(n):
        for c in range(n):
            g.add_node(r * n + c, c * spacing, r * spacing)
    for r in range(n):
        for c in range(n):
            if c + 1 < n:
                g.add_edge(r * n + c, r * n + c + 1)
            if r + 1 < n:
                g.add_edge(r * n + c, (r + 1) * n + c, "RoadP")
    return g


def test_graph_metrics():
    g = grid(3, 400.0)
    assert (g.node_count, g.edge_count) == (9, 12)
    assert math.isclose(g.total_length, 4800.0)
    assert abs(g.orientation_entropy() - math.log(4)) < 1e-9
    assert abs(g.traffic_convenience(min_dist_m=1100.0) - math.sqrt(0.5)) < 1e-9
    assert g.chamfer(g) == 0.0
    assert sorted(map(len, g.cycles())) == [4, 4, 4, 4]
    assert ul.RoadGraph.from_json(g.to_json()).to_json() == g.to_json()
    assert g.to_opendrive().count("<road ") == 12


def test_simplify():
    g = ul.RoadGraph()
    for i, x in enumerate([0.0, 50.0, 100.0]):
        g.add_node(i, x, 0.0)
    g.add_edge(0, 1)
    g.add_edge(1, 2)
    s = g.simplify()
    assert (s.node_count, s.edge_count) == (2, 1)


def test_point_and_mask_metrics():
    assert ul.chamfer_distance([(0, 0)], [(3, 4)]) == 5.0
    assert ul.wasserstein_1d([1, 2, 3], [2, 3, 4]) == 1.0
    assert ul.mean_iou([[1, 1, 0]], [[0, 1, 1]]) == 1 / 3
    bar = [[1 if 2 <= c < 18 and 2 <= r < 5 else 0 for c in range(20)] for r in range(7)]
    skeleton = ul.thin(bar)
    assert 0 < sum(map(sum, skeleton)) < sum(map(sum, bar))
    assert ul.cl_dice(bar, bar) == 1.0
    assert ul.frechet_distance([0, 0], [[1, 0], [0, 1]], [0, 0], [[1, 0], [0, 1]]) == 0.0
    try:
        ul.mean_iou([[1]], [[1, 0]])
    except ValueError:
        pass
    else:
        raise AssertionError("shape mismatch accepted")


def test_labels():
    labels = ul.label_tile(12.0, 1.2, 0.35, 40.0)
    assert labels["road_density"] == "dense"
    assert labels["orientation"] == "ordered"
    assert labels["text"].startswith("OSM,")
    assert ul.label_tile(0.0, None, 0.0, None)["building_height"] == "low_rise"


def test_pipeline_on_synthetic_city():
    with tempfile.TemporaryDirectory() as tmp:
        city = pathlib.Path(tmp) / "city"
        ul.write_synthetic_city(str(city))
        manifests = ul.run(str(city / "config.json"))
        assert [m["stage"] for m in manifests] == [
            "ingest", "heights", "rasterize", "graph", "blocks", "label", "export",
        ]
        assert all(m["status"] == "ok" for m in manifests)
        out = city / "out"
        graph = ul.RoadGraph.from_json((out / "graph" / "region.graph.json").read_text())
        assert graph.edge_count > 0
        labels = sorted((out / "label").glob("*.labels.json"))
        assert len(labels) == 9
        assert json.loads(labels[0].read_text())["text"].startswith("OSM,")
        again = ul.run_one("graph", str(city / "config.json"))
        assert again["outputs"] == manifests[3]["outputs"]
        try:
            ul.run(str(city / "absent.json"))
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("missing config accepted")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
