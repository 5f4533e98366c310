from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from wesr.cli import main
from wesr.transcript import strip_tags

DATA = Path(__file__).parent / "data"

REFS = [
    {"id": "u1", "text": "the cat [cough] sat on the mat", "language": "en"},
    {"id": "u2", "text": "<crying> why did you </crying> go [sobbing]", "language": "en"},
    {"id": "u3", "text": "<shouting>住手,快点住手</shouting>[giggle]那我走了。", "language": "zh"},
    {"id": "u4", "text": "[laughs] 好的 <whispering> ok then </whispering>", "language": "mixed"},
]


def jsonl(path: Path, rows) -> str:
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    return str(path)


@pytest.fixture
def refs(tmp_path):
    return jsonl(tmp_path / "refs.jsonl", REFS)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_clean(capsys, refs):
    code, out, _ = run(capsys, "validate", refs)
    assert code == 0 and out.strip() == "0 diagnostics"


def test_validate_lists_every_diagnostic(capsys, tmp_path):
    p = jsonl(tmp_path / "m.jsonl", REFS + [
        {"id": "bad1", "text": "<crying> oh </shouting>", "language": "en"},
        {"id": "bad2", "text": "hi [yawn]", "language": "en"},
    ])
    code, out, _ = run(capsys, "validate", p)
    lines = out.strip().splitlines()
    assert code == 1
    assert lines[-1] == "3 diagnostics"
    assert lines[0].startswith("bad1:12: CloseWithoutOpen")
    assert lines[2].startswith("bad2:3: UnknownTag")


def test_validate_schema_error_exit_2(capsys, tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"id": "a", "text": "x", "language": "en"}\n{oops\n', encoding="utf-8")
    code, _, err = run(capsys, "validate", str(p))
    assert code == 2 and ":2:" in err


def test_score_self_is_perfect(capsys, refs, tmp_path):
    hyp = jsonl(tmp_path / "hyp.jsonl", [{"id": r["id"], "text": r["text"]} for r in REFS])
    code, out, _ = run(capsys, "score", "--ref", refs, "--hyp", hyp, "--format", "json", "--aggregate", "--kinds")
    doc = json.loads(out)
    assert code == 0
    assert all(row["f1"] == 1.0 for row in doc["tags"].values())
    assert doc["micro"] == doc["macro"] == {"p": 1.0, "r": 1.0, "f1": 1.0}
    assert doc["categories"]["micro"]["f1"] == 1.0 and doc["kinds"]["continuous"]["micro"]["f1"] == 1.0


def test_score_markdown_layout(capsys, refs, tmp_path):
    hyp = jsonl(tmp_path / "hyp.jsonl", [{"id": r["id"], "text": r["text"]} for r in REFS])
    code, out, _ = run(capsys, "score", "--ref", refs, "--hyp", hyp)
    lines = out.splitlines()
    assert lines[0] == "| Tag | P / R / F1 (%) | TP | FP | FN |"
    assert "| crying | 100.0 / 100.0 / 100.0 | 3 | 0 | 0 |" in lines
    assert lines[lines.index("| macro | 100.0 / 100.0 / 100.0 | | | |") - 1].startswith("| micro |")


def test_score_missing_half(capsys, refs, tmp_path):
    hyp = jsonl(tmp_path / "hyp.jsonl", [{"id": r["id"], "text": r["text"]} for r in REFS[:2]])
    code, out, err = run(capsys, "score", "--ref", refs, "--hyp", hyp, "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["utterances"]["missing"] == ["u3", "u4"]
    assert doc["tags"]["shouting"] == {"tp": 0, "fp": 0, "fn": 6, "p": 0.0, "r": 0.0, "f1": 0.0}
    assert "2 reference utterances have no hypothesis" in err


def test_score_malformed_hypothesis_line(capsys, refs, tmp_path):
    p = tmp_path / "hyp.jsonl"
    p.write_text('{"id": "u1", "text": "x"}\n{"id": "u2"}\n', encoding="utf-8")
    code, _, err = run(capsys, "score", "--ref", refs, "--hyp", str(p))
    assert code == 2 and "hyp.jsonl:2:" in err


def test_score_strict_vs_lenient(capsys, refs, tmp_path):
    hyp = jsonl(tmp_path / "hyp.jsonl", [{"id": "u1", "text": "the cat [cough] sat on the mat <crying>"}])
    code, _, err = run(capsys, "score", "--ref", refs, "--hyp", hyp, "--strict")
    assert code == 1 and "u1" in err
    code, out, _ = run(capsys, "score", "--ref", refs, "--hyp", hyp, "--lenient", "--format", "json")
    assert code == 0 and json.loads(out)["diagnostics"][0]["id"] == "u1"


def test_score_language_filter(capsys, refs, tmp_path):
    hyp = jsonl(tmp_path / "hyp.jsonl", [{"id": r["id"], "text": r["text"]} for r in REFS])
    code, out, _ = run(capsys, "score", "--ref", refs, "--hyp", hyp, "--lang", "zh", "--format", "json")
    doc = json.loads(out)
    assert doc["utterances"]["scored"] == 1 and doc["utterances"]["extra"] == []
    assert set(doc["tags"]) == {"shouting", "giggle"}


def test_score_csv(capsys, refs, tmp_path):
    hyp = jsonl(tmp_path / "hyp.jsonl", [{"id": r["id"], "text": r["text"]} for r in REFS])
    code, out, _ = run(capsys, "score", "--ref", refs, "--hyp", hyp, "--format", "csv", "--aggregate", "--kinds")
    rows = out.splitlines()
    assert rows[0] == "section,label,tp,fp,fn,precision,recall,f1"
    assert "tag,micro,15,0,0,1.000000,1.000000,1.000000" in rows
    assert any(r.startswith("category,CRYING,") for r in rows) and any(r.startswith("kind,discrete,") for r in rows)


def test_json_report_round_trips_byte_identically(capsys, refs, tmp_path):
    hyp = jsonl(tmp_path / "hyp.jsonl", [{"id": "u1", "text": "the cat sat [cough] on mat"}, {"id": "u2", "text": "why <crying> did </crying> you go"}])
    _, out, _ = run(capsys, "score", "--ref", refs, "--hyp", hyp, "--format", "json", "--aggregate", "--kinds")
    assert json.dumps(json.loads(out), sort_keys=True, indent=2, ensure_ascii=False) + "\n" == out


def test_wer(capsys, refs, tmp_path):
    hyp = jsonl(tmp_path / "sys.jsonl", [{"id": r["id"], "text": strip_tags(r["text"])} for r in REFS])
    code, out, _ = run(capsys, "wer", "--ref", refs, "--hyp", hyp, "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["corpus"]["all"]["wer"] == 0.0

    r = jsonl(tmp_path / "r.jsonl", [{"id": "a", "text": "the cat sat", "language": "en"}])
    h = jsonl(tmp_path / "h.jsonl", [{"id": "a", "text": "the cat sit"}])
    code, out, _ = run(capsys, "wer", "--ref", r, "--hyp", h)
    assert "| h | 33.3 | 33.3 |" in out


def test_wer_is_pooled(capsys, tmp_path):
    r = jsonl(tmp_path / "r.jsonl", [{"id": "a", "text": "a b c d", "language": "en"}, {"id": "b", "text": "x", "language": "en"}])
    h = jsonl(tmp_path / "h.jsonl", [{"id": "a", "text": "a b c d"}, {"id": "b", "text": "y"}])
    _, out, _ = run(capsys, "wer", "--ref", r, "--hyp", h, "--format", "json")
    assert json.loads(out)["corpus"]["all"] == {"errors": 1, "tokens": 5, "wer": 0.2}


def test_stats(capsys, tmp_path):
    toy = jsonl(tmp_path / "toy.jsonl", [
        {"id": "a", "text": "[laughs] hi", "language": "en"},
        {"id": "b", "text": "<shouting> 住手 </shouting> [laughs] [laughs]", "language": "zh"},
        {"id": "c", "text": "<crying> a </crying> [sobbing] [sobbing]", "language": "en"},
    ])
    code, out, _ = run(capsys, "stats", toy, "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["total_tags"] == 7
    assert doc["total_tags_per_utterance"]["counts"] == {"1": 1, "2": 0, ">=3": 2}
    assert doc["unique_tags_per_utterance"]["counts"] == {"1": 1, "2": 2, ">=3": 0}
    code, out, _ = run(capsys, "stats", toy)
    assert "| Total tags | 1 (33.33%) | 0 (0.00%) | 2 (66.67%) |" in out


def test_stats_empty_manifest(capsys, tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("", encoding="utf-8")
    code, out, _ = run(capsys, "stats", str(p), "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["utterances"] == 0 and doc["total_tags"] == 0


def test_stats_load_failure(capsys, tmp_path):
    code, _, _ = run(capsys, "stats", str(tmp_path / "missing.jsonl"))
    assert code == 2
    bad = jsonl(tmp_path / "bad.jsonl", [{"id": "x", "text": "<crying> oh", "language": "en"}])
    code, _, _ = run(capsys, "stats", bad)
    assert code == 2


def test_align_debug_golden(capsys):
    code, out, _ = run(capsys, "align", "--ref", "the cat sat on the mat", "--hyp", "the dog [cough] sit on the mat", "--debug")
    trace = (DATA / "align_replace_trace.txt").read_text(encoding="utf-8")
    assert code == 0 and out == trace + "the cat [cough] sat on the mat\n"
    assert sum(line.startswith("replace") for line in out.splitlines()) == 1
    assert sum(line.startswith("    ") for line in out.splitlines()) == 1


def test_align_json(capsys):
    code, out, _ = run(capsys, "align", "--ref", "a b c", "--hyp", "a [cough] c", "--format", "json")
    doc = json.loads(out)
    assert doc["aligned"] == "a [cough] b c" and doc["counts"] == {"S": 0, "I": 0, "D": 1}


def test_normalize(capsys, tmp_path):
    src = jsonl(tmp_path / "syn.jsonl", [{"id": "s1", "text": "嗯[tsk]好"}, {"id": "s2", "text": "好[laugh]"}])
    excl = tmp_path / "excl.jsonl"
    code, out, _ = run(capsys, "normalize", src, "--from", "synparaspeech", "--exclusions", str(excl))
    assert code == 0
    assert [json.loads(x)["text"] for x in out.splitlines()] == ["好[laughs]"]
    assert json.loads(excl.read_text(encoding="utf-8")) == {"id": "s1", "reason": "outside_taxonomy", "raw_tag": "[tsk]"}


def test_normalize_mapping_override(capsys, tmp_path):
    src = jsonl(tmp_path / "syn.jsonl", [{"id": "s1", "text": "a [tsk]"}])
    m = tmp_path / "map.json"
    m.write_text(json.dumps({"synparaspeech/tsk": "cough"}), encoding="utf-8")
    code, out, err = run(capsys, "normalize", src, "--from", "synparaspeech", "--mapping", str(m))
    assert code == 0 and json.loads(out)["text"] == "a [cough]" and err == ""
    m.write_text(json.dumps({"synparaspeech/tsk": "nope"}), encoding="utf-8")
    code, _, _ = run(capsys, "normalize", src, "--from", "synparaspeech", "--mapping", str(m))
    assert code == 2


def test_normalize_rejects_unknown_source(capsys, tmp_path):
    src = jsonl(tmp_path / "x.jsonl", [])
    with pytest.raises(SystemExit) as exc:
        main(["normalize", src, "--from", "librispeech"])
    assert exc.value.code == 2


def test_perturb_is_seeded(capsys, refs):
    args = ("perturb", refs, "--seed", "42", "--sub", "0.3", "--ins", "0.2", "--del", "0.2", "--drop", "0.3", "--shift=-1,0,1", "--jitter=-1,0,1")
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    _, c, _ = run(capsys, *args[:2], "--seed", "43", *args[4:])
    assert a == b != c
    assert [json.loads(x)["id"] for x in a.splitlines()] == ["u1", "u2", "u3", "u4"]


def test_perturb_bad_rate(capsys, refs):
    code, _, err = run(capsys, "perturb", refs, "--sub", "2")
    assert code == 1 and "sub_rate" in err


def test_module_entry_point(refs):
    proc = subprocess.run([sys.executable, "-m", "wesr", "validate", refs], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0 diagnostics"
