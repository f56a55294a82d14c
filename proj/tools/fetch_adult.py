#!/usr/bin/env python3
"""Download and verify the UCI Adult training file (adult.data, 32561 rows).

The dataset is not bundled with the repository. A verbatim copy of the UCI
file (with a header line added) ships inside the `fairness` 0.1.8 wheel on
PyPI; this script fetches that wheel, checks it against the sha256 published
by the package index, extracts `fairness/data/raw/adult.csv` and checks that
file's sha256 as well before writing it.

Usage: fetch_adult.py [output-path]   (default: data/adult.csv)
"""

import hashlib
import io
import os
import sys
import urllib.request
import zipfile

WHEEL_PATH = ("packages/f6/d0/038541647d46112174ae8f9d7ef256d73cfccc0668923748826a0d4cb63c/"
              "fairness-0.1.8-py3-none-any.whl")
WHEEL_URLS = [
    "https://files.pythonhosted.org/" + WHEEL_PATH,
    "https://pypi.org/" + WHEEL_PATH,
]
WHEEL_SHA256 = "7f21cf0943f2a6fef7f7597eb99461bd4b2f7a26fe9810964675496cde6992e1"
MEMBER = "fairness/data/raw/adult.csv"
CSV_SHA256 = "c30ce1e55a965b04950321870db74c19f4aa437120a692f32e72f6a4fa31c418"


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fetch_wheel() -> bytes:
    errors = []
    for url in WHEEL_URLS:
        try:
            with urllib.request.urlopen(url, timeout=60) as resp:
                data = resp.read()
        except Exception as exc:  # try the next mirror
            errors.append(f"{url}: {exc}")
            continue
        if sha256(data) != WHEEL_SHA256:
            errors.append(f"{url}: checksum mismatch")
            continue
        return data
    raise RuntimeError("could not download the Adult data:\n  " + "\n  ".join(errors))


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "adult.csv")
    if os.path.exists(out):
        with open(out, "rb") as f:
            if sha256(f.read()) == CSV_SHA256:
                print(f"{out}: present, checksum ok")
                return 0
        print(f"{out}: checksum mismatch, downloading again", file=sys.stderr)

    try:
        wheel = fetch_wheel()
    except RuntimeError as exc:
        print(exc, file=sys.stderr)
        return 1
    csv = zipfile.ZipFile(io.BytesIO(wheel)).read(MEMBER)
    if sha256(csv) != CSV_SHA256:
        print(f"{MEMBER}: checksum mismatch", file=sys.stderr)
        return 1

    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "wb") as f:
        f.write(csv)
    rows = csv.count(b"\n") - 1
    print(f"{out}: written ({rows} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
