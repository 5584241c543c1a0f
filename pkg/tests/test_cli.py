import json

import pytest

from weakbox.cli import cli_main


@pytest.fixture
def corpus(tmp_path):
    spec = {"count": 6, "seed": 3}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "corpus"
    assert cli_main(["synth", "--spec", str(spec_path), "--out", str(out)]) == 0
    return out


def test_synth_outputs(corpus):
    assert (corpus / "gt.json").exists()
    assert (corpus / "lexicon.json").exists()
    assert len(list(corpus.glob("*.wsab"))) == 6


def test_detect_then_eval(corpus, tmp_path, capsys):
    pred = tmp_path / "pred.json"
    assert cli_main(["detect", "--bundles", str(corpus),
                     "--lexicon", str(corpus / "lexicon.json"),
                     "--out", str(pred)]) == 0
    assert cli_main(["eval-det", "--pred", str(pred),
                     "--gt", str(corpus / "gt.json"), "--range"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert set(result) == {"mAP50", "mAP50_95"}
    assert result["mAP50"] >= 0.9  # planted corpus is easy

def test_eval_det_empty_predictions(corpus, tmp_path, capsys):
    pred = tmp_path / "empty.json"
    pred.write_text("[]")
    assert cli_main(["eval-det", "--pred", str(pred),
                     "--gt", str(corpus / "gt.json")]) == 0
    assert json.loads(capsys.readouterr().out)["mAP50"] == 0.0


def test_ground_and_eval_grounding(corpus, tmp_path, capsys):
    gt_doc = json.loads((corpus / "gt.json").read_text())
    by_image = {}
    for ann in gt_doc["annotations"]:
        by_image.setdefault(ann["image_id"], []).append(ann)
    phrases = tmp_path / "phrases.jsonl"
    with open(phrases, "w") as f:
        for image_id, anns in sorted(by_image.items()):
            for i, ann in enumerate(anns):
                f.write(json.dumps({
                    "bundle": f"{image_id}.wsab",
                    "token_indices": [i],
                    "phrase": f"obj{ann['category_id']}",
                    "gt_boxes": [ann["bbox"]],
                }) + "\n")
    pred = tmp_path / "ground.jsonl"
    assert cli_main(["ground", "--bundles", str(corpus),
                     "--phrases", str(phrases), "--out", str(pred)]) == 0
    assert cli_main(["eval-grounding", "--pred", str(pred),
                     "--gt", str(phrases)]) == 0
    score = json.loads(capsys.readouterr().out)["recall_at_1"]
    assert score >= 0.9


def test_pseudo_label(tmp_path):
    pred = tmp_path / "pred.json"
    pred.write_text(json.dumps([
        {"image_id": "a", "category_id": 1, "bbox": [0, 0, 2, 2], "score": 0.9},
        {"image_id": "a", "category_id": 1, "bbox": [0.5, 0, 2, 2], "score": 0.8},
        {"image_id": "a", "category_id": 1, "bbox": [0, 0, 2, 2], "score": 0.1},
    ]))
    out = tmp_path / "labels.json"
    assert cli_main(["pseudo-label", "--pred", str(pred), "--conf", "0.2",
                     "--iou", "0.5", "--out", str(out)]) == 0
    kept = json.loads(out.read_text())
    assert len(kept) == 1 and kept[0]["score"] == 0.9


def test_render(corpus, tmp_path):
    bundle = sorted(corpus.glob("*.wsab"))[0]
    out = tmp_path / "overlay.ppm"
    assert cli_main(["render", "--bundle", str(bundle), "--token", "0",
                     "--out", str(out)]) == 0
    assert out.read_bytes().startswith(b"P6\n")


def test_unknown_flag_exit_2(capsys):
    assert cli_main(["detect", "--nope"]) == 2


def test_missing_file_exit_1(tmp_path):
    assert cli_main(["eval-det", "--pred", str(tmp_path / "nope.json"),
                     "--gt", str(tmp_path / "nope2.json")]) == 1


def test_bad_bundle_exit_1(tmp_path):
    bad_dir = tmp_path / "bundles"
    bad_dir.mkdir()
    (bad_dir / "bad.wsab").write_bytes(b"XXXX garbage")
    lex = tmp_path / "lex.json"
    lex.write_text(json.dumps([{"id": 1, "name": "dog", "aliases": ["dog"]}]))
    assert cli_main(["detect", "--bundles", str(bad_dir),
                     "--lexicon", str(lex), "--out", str(tmp_path / "o.json")]) == 1
