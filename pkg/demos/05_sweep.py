"""Drive a hyper-parameter sweep through the CLI and read the summary.

The grid varies the overall edit amplitude; because pass 1 and all the
guidance statistics are independent of it, the map-divergence column
comes out exactly proportional.
"""

import csv
import tempfile
from pathlib import Path

from adapedit.cli import main


def run() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        grid = root / "grid.txt"
        grid.write_text(
            "prompt     = a dog standing on the grass\n"
            "edit       = a dog sitting on the grass\n"
            "steps      = 12\n"
            "seed       = 42\n"
            f"out_dir    = {root / 'sweep'}\n"
            "lambda_s   = 0, 0.25, 0.5, 0.75, 1.0\n",
            encoding="utf-8",
        )
        code = main(["sweep", "--config", str(grid), "--jobs", "4"])
        assert code == 0

        with open(root / "sweep" / "summary.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))

        print(f"{'lambda_s':>9}  {'map_divergence':>15}  {'image_l2':>10}")
        for row in rows:
            print(
                f"{float(row['lambda_s']):9.2f}"
                f"  {float(row['map_divergence']):15.4f}"
                f"  {float(row['image_l2']):10.1f}"
            )
        full = float(rows[-1]["map_divergence"])
        print("\ndivergence / lambda_s ratio (constant = exactly linear):")
        for row in rows[1:]:
            ls = float(row["lambda_s"])
            print(f"  {ls:4.2f}: {float(row['map_divergence']) / ls:.6f}")
        print(f"\nfull-amplitude divergence: {full:.4f}")


if __name__ == "__main__":
    run()
