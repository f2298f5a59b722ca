"""Fetch the two UCI regression tables used by the benchmark suite.

Writes plain CSV files (features first, target last, header row) under
data/uci/:

  * energy.csv — Energy Efficiency (768 rows, 8 features, target = heating
    load Y1), https://archive.ics.uci.edu/dataset/242
  * yacht.csv  — Yacht Hydrodynamics (308 rows, 6 features, target =
    residuary resistance), https://archive.ics.uci.edu/dataset/243

Requires network access and, for energy, openpyxl (the source table is an
xlsx workbook).  If the environment is offline, download the raw files from
the URLs above by hand and run this script with --local pointing at them.
"""

import argparse
import io
import os
import sys
import urllib.request

ENERGY_URL = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/00242/ENB2012_data.xlsx"
)
YACHT_URL = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/00243/yacht_hydrodynamics.data"
)


def _fetch(url: str) -> bytes:
    with urllib.request.urlopen(url, timeout=60) as response:
        return response.read()


def write_energy(raw: bytes, path: str) -> None:
    import openpyxl

    book = openpyxl.load_workbook(io.BytesIO(raw), read_only=True)
    sheet = book.active
    rows = []
    for row in sheet.iter_rows(min_row=2, values_only=True):
        values = [v for v in row[:10]]
        if values[0] is None:
            continue
        # X1..X8 then Y1 (heating load); Y2 is dropped.
        rows.append(",".join(repr(float(v)) for v in values[:9]))
    header = ",".join(f"x{i}" for i in range(1, 9)) + ",y"
    with open(path, "w") as handle:
        handle.write(header + "\n" + "\n".join(rows) + "\n")
    print(f"wrote {path}: {len(rows)} rows")


def write_yacht(raw: bytes, path: str) -> None:
    rows = []
    for line in raw.decode().splitlines():
        fields = line.split()
        if len(fields) == 7:
            rows.append(",".join(repr(float(v)) for v in fields))
    header = ",".join(f"x{i}" for i in range(1, 7)) + ",y"
    with open(path, "w") as handle:
        handle.write(header + "\n" + "\n".join(rows) + "\n")
    print(f"wrote {path}: {len(rows)} rows")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/uci")
    parser.add_argument(
        "--local-energy", default=None, help="path to a pre-downloaded ENB2012_data.xlsx"
    )
    parser.add_argument(
        "--local-yacht", default=None, help="path to a pre-downloaded yacht_hydrodynamics.data"
    )
    args = parser.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    try:
        energy_raw = (
            open(args.local_energy, "rb").read()
            if args.local_energy
            else _fetch(ENERGY_URL)
        )
        yacht_raw = (
            open(args.local_yacht, "rb").read()
            if args.local_yacht
            else _fetch(YACHT_URL)
        )
    except OSError as exc:
        print(f"download failed: {exc}", file=sys.stderr)
        print(__doc__, file=sys.stderr)
        return 1
    write_energy(energy_raw, os.path.join(args.out, "energy.csv"))
    write_yacht(yacht_raw, os.path.join(args.out, "yacht.csv"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
