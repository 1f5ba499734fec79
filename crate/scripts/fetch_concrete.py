"""Rebuild data/concrete.csv (1030 rows, 8 features + compressive_strength).

The copy comes from the `modeldata::concrete` table bundled in the
`rdatasets` wheel, which matches the UCI Concrete Compressive Strength data.

    python3 scripts/fetch_concrete.py [out.csv]
"""

import glob
import subprocess
import sys
import tempfile
import zipfile


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "data/concrete.csv"
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp, "rdatasets"],
            check=True,
        )
        wheel = glob.glob(f"{tmp}/rdatasets-*.whl")[0]
        zipfile.ZipFile(wheel).extractall(tmp)
        sys.path.insert(0, tmp)
        import rdatasets

        df = rdatasets.data("modeldata", "concrete")
    df = df.drop(columns=[c for c in df.columns if c == "rownames"])
    assert df.shape == (1030, 9), df.shape
    df.to_csv(out, index=False)
    print(f"wrote {out}: {df.shape[0]} rows")


if __name__ == "__main__":
    main()
