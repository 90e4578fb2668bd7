"""Exporter round-trips: the dump must load through the clustering package's
reader with one record per decodable image and the model's class-layer width.

Tests run the zoo architecture with random weights so no download is needed;
the capture point and formats are identical either way.
"""

import numpy as np
import pytest
from PIL import Image

from cfexport.dump import write_dump
from cfexport.export import ExportJob, export

from clusterflow.dataio import load_activations

MODEL = "squeezenet1_0"          # smallest zoo classifier; class width 1000
CLASS_WIDTH = 1000


def paint_images(root, per_class=2, classes=("shark", "tabby", "daisy", "bottle")):
    rng = np.random.default_rng(0)
    paths = []
    for cls in classes:
        d = root / cls
        d.mkdir(parents=True)
        for i in range(per_class):
            arr = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
            p = d / f"{cls}_{i}.png"
            Image.fromarray(arr).save(p)
            paths.append(p)
    return paths


@pytest.fixture(scope="module")
def class_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    paths = paint_images(root)
    return root, paths


class TestDirectoryLabels:
    def test_round_trip(self, class_tree, tmp_path):
        root, paths = class_tree
        out = tmp_path / "dirs.cfa"
        result = export(ExportJob(model=MODEL, images=str(root), out=str(out),
                                  label_source="dirs", weights="none"))
        assert result.count == len(paths)
        assert result.vector_width == CLASS_WIDTH

        acts = load_activations(out)
        assert len(acts) == len(paths)
        assert all(a.features.shape == (CLASS_WIDTH,) for a in acts)
        for a in acts:
            directory = a.source_id.split("/")[0]
            assert a.labels == {directory}

    def test_four_distinct_directory_labels(self, class_tree, tmp_path):
        root, _ = class_tree
        out = tmp_path / "labels.cfa"
        export(ExportJob(model=MODEL, images=str(root), out=str(out),
                         label_source="dirs", weights="none"))
        acts = load_activations(out)
        assert {next(iter(a.labels)) for a in acts} == \
            {"shark", "tabby", "daisy", "bottle"}


class TestTopKLabels:
    def test_each_record_carries_up_to_k(self, class_tree, tmp_path):
        root, paths = class_tree
        out = tmp_path / "topk.cfa"
        result = export(ExportJob(model=MODEL, images=str(root), out=str(out),
                                  label_source="topk", top_k=5, weights="none"))
        assert result.count == len(paths)
        acts = load_activations(out)
        for a in acts:
            assert 1 <= len(a.labels) <= 5
            assert all(l.startswith("class") for l in a.labels)
        # top-k labels really are the k largest coordinates
        for a in acts:
            top = {f"class{int(i)}" for i in np.argsort(a.features)[::-1][:5]}
            assert a.labels == top


class TestManifestLabels:
    def test_manifest_and_missing_entries(self, class_tree, tmp_path):
        root, paths = class_tree
        manifest = tmp_path / "labels.csv"
        lines = ["filename,labels"]
        for p in paths[:-1]:  # leave the last image unlabelled
            rel = p.relative_to(root).as_posix()
            lines.append(f"{rel},x;y")
        manifest.write_text("\n".join(lines) + "\n")
        out = tmp_path / "manifest.cfa"
        result = export(ExportJob(model=MODEL, images=str(root), out=str(out),
                                  label_source="manifest",
                                  manifest=str(manifest), weights="none"))
        assert result.count == len(paths) - 1
        acts = load_activations(out)
        assert all(a.labels == {"x", "y"} for a in acts)
        assert result.skip_log is not None


class TestRobustness:
    def test_undecodable_image_skipped_and_logged(self, tmp_path):
        root = tmp_path / "imgs"
        paint_images(root, per_class=1, classes=("ok",))
        bad = root / "ok" / "broken.jpg"
        bad.write_text("this is not an image")
        out = tmp_path / "skip.cfa"
        result = export(ExportJob(model=MODEL, images=str(root), out=str(out),
                                  label_source="dirs", weights="none"))
        assert result.count == 1
        assert len(result.skipped) == 1
        assert "broken.jpg" in result.skipped[0][0]
        log_text = (tmp_path / "skip.cfa.skipped.log").read_text()
        assert "broken.jpg" in log_text
        assert len(load_activations(out)) == 1

    def test_empty_export_is_valid(self, tmp_path):
        root = tmp_path / "none"
        root.mkdir()
        out = tmp_path / "empty.cfa"
        result = export(ExportJob(model=MODEL, images=str(root), out=str(out),
                                  weights="none"))
        assert result.count == 0
        assert load_activations(out) == []

    def test_layer_override_changes_width(self, class_tree, tmp_path):
        root, paths = class_tree
        out = tmp_path / "layer.cfa"
        result = export(ExportJob(model=MODEL, images=str(root), out=str(out),
                                  label_source="dirs", weights="none",
                                  layer="features"))
        assert result.vector_width != CLASS_WIDTH
        acts = load_activations(out)
        assert all(a.features.shape == (result.vector_width,) for a in acts)

    def test_unknown_layer_errors(self, class_tree, tmp_path):
        root, _ = class_tree
        with pytest.raises(ValueError):
            export(ExportJob(model=MODEL, images=str(root),
                             out=str(tmp_path / "x.cfa"),
                             weights="none", layer="not_a_module"))


class TestDumpWriter:
    def test_deterministic_bytes(self, tmp_path):
        records = [("a", np.arange(4.0), ["x"]), ("b", np.ones(4), ["y", "x"])]
        p1, p2 = tmp_path / "one.cfa", tmp_path / "two.cfa"
        write_dump(p1, records)
        write_dump(p2, records)
        assert p1.read_bytes() == p2.read_bytes()

    def test_ragged_width_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_dump(tmp_path / "bad.cfa",
                       [("a", np.ones(3), ["x"]), ("b", np.ones(4), ["x"])])

    def test_loads_via_primary_reader(self, tmp_path):
        path = tmp_path / "cross.cfa"
        write_dump(path, [("img.png", np.array([1.5, -2.0]), ["cat", "pet"])])
        (act,) = load_activations(path)
        assert act.source_id == "img.png"
        assert act.labels == {"cat", "pet"}
        assert np.array_equal(act.features, [1.5, -2.0])
