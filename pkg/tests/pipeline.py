"""Drive the full command-line pipeline on the bundled fixture corpus."""

from pathlib import Path

from pathaug.cli import main

FIXTURE_SEED = 7


def run(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"{argv[0]} exited with {code}"


def full_pipeline(base: Path, seed: int = 42, jobs: int = 2) -> Path:
    """make-fixture -> resample -> split -> mix -> augment -> enhance -> evaluate.

    Returns the workspace directory.
    """
    base = Path(base)
    ws = base / "ws"
    common = ["--seed", seed, "--jobs", jobs, "--workspace", ws]
    run("make-fixture", base / "fixture", "--seed", FIXTURE_SEED)
    run("resample", *common, "--corpus", base / "fixture" / "corpus")
    run("split", *common, "--folds", 4)
    run("mix", *common, "--noise", base / "fixture" / "noise")
    run("augment", *common, "--noise", base / "fixture" / "noise", "--strategy", "noise",
        "--ratio", 100, "--fold", 0)
    for method in ("identity", "wiener"):
        run("enhance", *common, "--method", method)
        run("evaluate", *common, "--enhanced", f"enhanced/{method.capitalize()}")
    return ws
