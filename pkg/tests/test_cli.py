import csv
import json

import numpy as np
import pytest
from PIL import Image

from palmscope.cli import execute_command
from synth import PAGE_BLOBS, build_cli_fixture, caterpillar_page, via_export, write_manifest, write_png


@pytest.fixture
def fx(tmp_path):
    return build_cli_fixture(tmp_path / "in")


def run(*argv):
    return execute_command([str(a) for a in argv])


def read_json(path):
    return json.loads(path.read_text())


def stderr_error(capsys):
    err = capsys.readouterr().err.strip()
    assert "\n" not in err
    return json.loads(err)


# ---- severity ---------------------------------------------------------------------

def test_severity_sixty_forty(fx, tmp_path):
    out = tmp_path / "sev"
    assert run("severity", "--manifest", fx["leaves"], "--out", out) == 0
    rep = read_json(out / "report.json")
    by_id = {r["image_id"]: r for r in rep["leaflets"]}
    assert (by_id["leaf0"]["green_perc"], by_id["leaf0"]["brown_perc"]) == (60, 40)
    assert by_id["leaf0"]["leaf_pixels"] == 300
    assert by_id["leaf1"]["brown_perc"] == 25
    assert rep["errors"] == []
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert [r["brown_perc"] for r in rows] == ["40", "25"]
    overlay = np.array(Image.open(out / "overlays" / "leaf0_0.png"))
    assert overlay.shape == (30, 80, 3)


def test_severity_label_filter_skips_other_polygons(tmp_path):
    img = np.full((20, 20, 3), (20, 255, 10), dtype=np.uint8)
    write_png(tmp_path / "a.png", img)
    square = [(0, 0), (10, 0), (10, 10), (0, 10)]
    (tmp_path / "a.json").write_text(json.dumps(via_export({"a.png": [("leaflet", square), ("rachis", square)]})))
    m = write_manifest(tmp_path / "m.json", [{"image_id": "a", "image_path": "a.png", "annotation_path": "a.json"}])
    (tmp_path / "c.json").write_text(json.dumps({"severity_labels": ["leaflet"]}))
    assert run("severity", "--manifest", m, "--config", tmp_path / "c.json", "--out", tmp_path / "o") == 0
    assert len(read_json(tmp_path / "o" / "report.json")["leaflets"]) == 1


def test_severity_partial_failure_exits_1(tmp_path):
    write_png(tmp_path / "gray.png", np.full((8, 8, 3), 128, dtype=np.uint8))
    write_png(tmp_path / "green.png", np.full((8, 8, 3), (20, 255, 10), dtype=np.uint8))
    m = write_manifest(tmp_path / "m.json", [{"image_id": "g", "image_path": "gray.png"},
                                             {"image_id": "ok", "image_path": "green.png"}])
    assert run("severity", "--manifest", m, "--out", tmp_path / "o") == 1
    rep = read_json(tmp_path / "o" / "report.json")
    assert [e["image_id"] for e in rep["errors"]] == ["g"]
    assert rep["errors"][0]["kind"] == "NoLeafError"
    assert rep["leaflets"][0]["green_perc"] == 100


# ---- count ------------------------------------------------------------------------

def test_count_classical(fx, tmp_path):
    out = tmp_path / "cnt"
    assert run("count", "--method", "classical", "--manifest", fx["pages"], "--out", out) == 0
    rep = read_json(out / "report.json")
    assert [r["count"] for r in rep["images"]] == [len(b) for b in PAGE_BLOBS]
    assert (out / "overlays" / "page0.png").exists()
    comps = list(csv.DictReader((out / "components.csv").open()))
    assert len(comps) == sum(len(b) for b in PAGE_BLOBS)


def test_count_classical_blank_page_is_zero(tmp_path):
    write_png(tmp_path / "blank.png", caterpillar_page([], 50, 50))
    m = write_manifest(tmp_path / "m.json", [{"image_id": "b", "image_path": "blank.png"}])
    assert run("count", "--method", "classical", "--manifest", m, "--out", tmp_path / "o") == 0
    assert read_json(tmp_path / "o" / "report.json")["images"][0]["count"] == 0


def test_count_detections(fx, tmp_path):
    out = tmp_path / "cnt"
    assert run("count", "--method", "detections", "--manifest", fx["pages"], "--out", out) == 0
    rows = list(csv.DictReader((out / "counts.csv").open()))
    assert [int(r["count"]) for r in rows] == [int(r["truth_count"]) for r in rows]
    assert not (out / "components.csv").exists()


def test_count_detections_missing_file_is_record_error(tmp_path):
    write_png(tmp_path / "p.png", caterpillar_page([], 20, 20))
    m = write_manifest(tmp_path / "m.json", [{"image_id": "p", "image_path": "p.png"}])
    assert run("count", "--method", "detections", "--manifest", m, "--out", tmp_path / "o") == 1
    assert read_json(tmp_path / "o" / "report.json")["errors"][0]["image_id"] == "p"


# ---- eval / compare --------------------------------------------------------------

def test_eval_predictions_equal_truth(fx, tmp_path):
    out = tmp_path / "ev"
    assert run("eval", "--manifest", fx["pages"], "--out", out) == 0
    rep = read_json(out / "report.json")
    assert rep["overall"]["accuracy"] == 1.0
    assert rep["per_class"]["0"]["ap"] == pytest.approx(1.0)
    assert rep["map"] == pytest.approx(1.0)
    assert rep["count_agreement"]["percent"] == 100.0
    pr = list(csv.reader((out / "pr_class0.csv").open()))
    assert pr[0] == ["recall", "precision"] and len(pr) == 1 + sum(len(b) for b in PAGE_BLOBS)


def test_eval_with_false_positive(fx, tmp_path):
    det = fx["pages"].parent / "page1.det"
    det.write_text(det.read_text() + "0 0.5 90 90 110 110\n")
    assert run("eval", "--manifest", fx["pages"], "--out", tmp_path / "ev") == 0
    pc = read_json(tmp_path / "ev" / "report.json")["per_class"]["0"]
    assert (pc["tp"], pc["fp"], pc["fn"]) == (6, 1, 0)
    assert pc["precision"] == pytest.approx(6 / 7)
    assert pc["ap"] == pytest.approx(1.0)  # the FP ranks below every TP


def test_compare_reports_percent(fx, tmp_path):
    out = tmp_path / "cmp"
    assert run("compare", "--manifest", fx["pages"], "--out", out) == 0
    rep = read_json(out / "agreement.json")
    assert rep["methods"]["classical"]["percent"] == 100.0
    assert rep["methods"]["detections"]["matches"] == len(PAGE_BLOBS)
    header = (out / "agreement.csv").read_text().splitlines()[0]
    assert header == "image_id,truth_count,classical,detections"


def test_compare_single_method_and_missing_truth(fx, tmp_path):
    data = read_json(fx["pages"])
    data["records"][0]["truth_count"] = None
    fx["pages"].write_text(json.dumps(data))
    assert run("compare", "--method", "detections", "--manifest", fx["pages"], "--out", tmp_path / "c") == 1
    rep = read_json(tmp_path / "c" / "agreement.json")
    assert list(rep["methods"]) == ["detections"]
    assert rep["methods"]["detections"]["total"] == len(PAGE_BLOBS) - 1
    assert rep["errors"][0]["kind"] == "MissingTruth"


# ---- ingest / augment --------------------------------------------------------------

def test_ingest_via_and_yolo(fx, tmp_path):
    out = tmp_path / "ing"
    assert run("ingest", "--manifest", fx["leaves"], "--out", out) == 0
    rep = read_json(out / "annotations.json")
    poly = rep["images"][0]["polygons"][0]
    assert poly["pixels"] == 300
    raster = rep["images"][1]["raster_masks"][0]
    assert raster["source"] == "leaf1_mask.png" and raster["pixels"] > 0
    assert np.array(Image.open(out / poly["mask"])).max() == 255
    assert run("ingest", "--manifest", fx["pages"], "--out", out) == 0
    boxes = read_json(out / "annotations.json")["images"][0]["boxes"]
    assert np.allclose([b["box"] for b in boxes], [[10, 10, 50, 18], [70, 60, 79, 100]])


def test_ingest_box_document(tmp_path):
    write_png(tmp_path / "p.png", caterpillar_page([], 100, 50))
    doc = {"images": [{"filename": "p.png", "width": 100, "height": 50,
                       "boxes": [{"class_id": 1, "x_min": 10, "y_min": 5, "x_max": 30, "y_max": 25}]}]}
    (tmp_path / "b.json").write_text(json.dumps(doc))
    m = write_manifest(tmp_path / "m.json", [{"image_id": "p", "image_path": "p.png", "annotation_path": "b.json"}])
    assert run("ingest", "--manifest", m, "--out", tmp_path / "o") == 0
    entry = read_json(tmp_path / "o" / "annotations.json")["images"][0]
    assert entry["boxes"][0]["class_id"] == 1
    assert (tmp_path / "o" / entry["label_file"]).read_text().startswith("1 0.2 0.3 0.2 0.4")


def test_augment_seeded(fx, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"augmentation": {"count": 2}}))
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run("augment", "--manifest", fx["pages"], "--config", cfg, "--seed", 3, "--out", a) == 0
    assert run("augment", "--manifest", fx["pages"], "--config", cfg, "--seed", 3, "--out", b, "--jobs", 3) == 0
    assert run("augment", "--manifest", fx["pages"], "--config", cfg, "--seed", 4, "--out", c) == 0
    ma = (a / "augment_manifest.json").read_bytes()
    assert ma == (b / "augment_manifest.json").read_bytes()
    assert ma != (c / "augment_manifest.json").read_bytes()
    entries = json.loads(ma)["variants"]
    assert len(entries) == 2 * len(PAGE_BLOBS)
    assert (a / entries[0]["path"]).read_bytes() == (b / entries[0]["path"]).read_bytes()


def test_augment_fixed_steps(tmp_path):
    img = np.arange(48, dtype=np.uint8).reshape(4, 4, 3)
    write_png(tmp_path / "x.png", img)
    m = write_manifest(tmp_path / "m.json", [{"image_id": "x", "image_path": "x.png"}])
    (tmp_path / "c.json").write_text(json.dumps({"augmentation": {"steps": ["flip_h"]}}))
    assert run("augment", "--manifest", m, "--config", tmp_path / "c.json", "--out", tmp_path / "o") == 0
    out = np.array(Image.open(tmp_path / "o" / "images" / "x_aug0.png"))
    assert np.array_equal(out, img[:, ::-1])


# ---- config & errors -----------------------------------------------------------------

def test_config_env_fallback(fx, tmp_path, monkeypatch):
    cfg = tmp_path / "env.json"
    cfg.write_text(json.dumps({"output_dir": str(tmp_path / "from-env"), "overlays": False}))
    monkeypatch.setenv("PALMSCOPE_CONFIG", str(cfg))
    assert run("count", "--manifest", fx["pages"]) == 0
    assert (tmp_path / "from-env" / "report.json").exists()
    assert not (tmp_path / "from-env" / "overlays").exists()


@pytest.mark.parametrize("argv, kind", [
    (["count", "--bogus"], "usage"),
    (["frobnicate"], "usage"),
    (["count", "--manifest", "/nonexistent/m.json"], "io"),
])
def test_fatal_errors_are_one_line_json(argv, kind, capsys):
    assert run(*argv) == 2
    assert stderr_error(capsys)["error"] == kind


def test_schema_violations(fx, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"iou_cut": 1.5}))
    assert run("count", "--manifest", fx["pages"], "--config", bad) == 2
    e = stderr_error(capsys)
    assert e["error"] == "schema" and e["message"].startswith("iou_cut")
    bad.write_text(json.dumps({"schema_version": 1, "records": [{"image_id": "a", "image_path": "nope.png"}]}))
    assert run("count", "--manifest", bad) == 2
    assert "records[0].image_path" in stderr_error(capsys)["message"]
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert run("count", "--manifest", fx["pages"], "--config", bad) == 2
    assert stderr_error(capsys)["error"] == "schema"


def test_jobs_flag_does_not_change_bytes(fx, tmp_path):
    for cmd in (["count", "--method", "classical"], ["eval"], ["compare"]):
        assert run(*cmd, "--manifest", fx["pages"], "--out", tmp_path / "j1") in (0, 1)
        assert run(*cmd, "--manifest", fx["pages"], "--out", tmp_path / "j4", "--jobs", 4) in (0, 1)
        for p in sorted((tmp_path / "j1").rglob("*")):
            if p.is_file():
                assert p.read_bytes() == (tmp_path / "j4" / p.relative_to(tmp_path / "j1")).read_bytes()
