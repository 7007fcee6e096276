"""Smoke test for the `purify` extension module.

Builds the extension, loads it from a temporary directory and exercises the
text, vision and pipeline entry points on a small synthetic fixture.

    python3 python/smoke_test.py
"""

import importlib.util
import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build_and_load(tmp):
    subprocess.run(
        ["cargo", "build", "--release", "-p", "purify-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libpurify.so"
    target = tmp / "purify.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("purify", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def check_text(purify):
    rec = purify.parse_ngram_record("wild_ADJ horse_NOUN\t1990\t12\t3")
    assert rec.phrase() == "wild horse", rec.phrase()
    assert rec.tokens == [("wild", "ADJ"), ("horse", "NOUN")]
    assert (rec.year, rec.match_count, rec.volume_count) == (1990, 12, 3)
    try:
        purify.parse_ngram_record("no tabs here")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed record accepted")

    found = purify.discover_variations("horse", [rec, rec])
    assert found == [("wild horse", 24)], found

    index = purify.CountIndex(["wild horse", "horse", "wild cat", "cat", "dog"])
    assert index.total_docs == 5
    assert index.co_frequency("wild", "horse") == 1
    d = purify.ngd("wild", "horse", index)
    expected = (math.log(2) - math.log(1)) / (math.log(5) - math.log(2))
    assert abs(d - expected) < 1e-12, (d, expected)
    assert purify.ngd("horse", "wild", index) == d
    assert purify.ngd("horse", "dog", index) == math.inf


def check_vision(purify):
    pixels = [((x // 8) % 2) * 1.0 for y in range(64) for x in range(64)]
    hog = purify.extract_hog(64, 64, pixels)
    assert len(hog) == 1764
    assert hog == purify.extract_hog(64, 64, pixels)

    assert purify.removal_probability(0.5, 0.5) == 1.0
    assert purify.removal_probability(1.0, 0.0) == 0.0

    pos = [[1.0 + 0.1 * i, 1.0] for i in range(10)]
    neg = [[-1.0 - 0.1 * i, -1.0] for i in range(10)]
    w, b = purify.train_linear_classifier(pos, neg)
    score = lambda x: w[0] * x[0] + w[1] * x[1] + b
    assert all(score(x) > 0 for x in pos) and all(score(x) <= 0 for x in neg)


def check_pipeline(purify, tmp):
    relevant, config = purify.write_planted_fixture(str(tmp / "fixture"), seed=3)
    out = tmp / "out"
    manifest = json.loads(purify.run_pipeline(config, str(out)))
    names = {v["name"] for v in manifest["variations"]}
    assert names, "no variations survived"
    for v in manifest["variations"]:
        assert len(v["kept"]) + len(v["removed"]) == v["fetched"], v["name"]
    assert (out / "manifest.json").exists()
    assert json.loads((out / "manifest.json").read_text()) == manifest

    try:
        purify.run_pipeline(json.dumps({"bogus": 1}))
    except ValueError:
        pass
    else:
        raise AssertionError("bad config accepted")
    print(f"pipeline: {len(names)} variations, {len(relevant)} planted relevant")


def main():
    with tempfile.TemporaryDirectory() as d:
        tmp = pathlib.Path(d)
        purify = build_and_load(tmp)
        check_text(purify)
        check_vision(purify)
        check_pipeline(purify, tmp)
    print("smoke test ok")


if __name__ == "__main__":
    sys.exit(main())
