"""Fetch benchmark datasets into ``datasets/`` as header-plus-numeric CSVs.

banana comes from the KEEL repository, packaged in the ``keel-ds`` wheel on
PyPI. The wheel is downloaded with pip (no install) and the raw ``.dat``
file is read straight out of the archive; KEEL's ``-1``/``1`` labels are
mapped to ``0``/``1``.

winewhite has no package on the mirror this project builds against, so it
is not fetched; place a CSV at ``datasets/winewhite.csv`` by hand (features
first, quality last) to enable its acceptance check.

Usage::

    python scripts/fetch_datasets.py [--dest DIR]
"""

import argparse
import csv
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

BANANA_MEMBER = "keel_ds/data/balanced/raw/banana.dat"


def _download_wheel(package, workdir):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary", ":all:", "-q", "-d", workdir, package],
        check=True,
    )
    wheels = sorted(Path(workdir).glob("*.whl"))
    if not wheels:
        raise SystemExit(f"pip download of {package} produced no wheel")
    return wheels[-1]


def parse_keel(text):
    """Attribute names and numeric rows of a KEEL file.

    Handles both the ``@attribute``/``@data`` format and the header-less
    comma-separated variant shipped in ``keel-ds``; the latter gets names
    ``x1, ..., xd, label``.
    """
    names, rows, in_data = [], [], "@data" not in text.lower()
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        low = s.lower()
        if in_data:
            rows.append([float(v) for v in s.split(",")])
        elif low.startswith("@attribute"):
            names.append(s.split()[1])
        elif low.startswith("@data"):
            in_data = True
    if not names and rows:
        names = [f"x{j + 1}" for j in range(len(rows[0]) - 1)] + ["label"]
    return names, rows


def fetch_banana(dest):
    with tempfile.TemporaryDirectory() as tmp:
        wheel = _download_wheel("keel-ds", tmp)
        with zipfile.ZipFile(wheel) as zf:
            text = zf.read(BANANA_MEMBER).decode()
    names, rows = parse_keel(text)
    out = dest / "banana.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names[:-1] + ["label"])
        for r in rows:
            w.writerow([repr(v) for v in r[:-1]] + [1 if r[-1] > 0 else 0])
    return out, len(rows)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dest", default=str(Path(__file__).resolve().parent.parent / "datasets"))
    args = ap.parse_args(argv)
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    path, n = fetch_banana(dest)
    print(f"banana: {n} rows -> {path}")
    print("winewhite: not available from the package mirror; skipped")


if __name__ == "__main__":
    main()
