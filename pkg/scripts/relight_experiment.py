"""MPRE of each variant on the relight-sequence fixture."""

import argparse
import warnings
from pathlib import Path

from reflprior.decompose import VARIANTS, DecomposeConfig, alternate_decompose
from reflprior.fixtures import relight_sequence
from reflprior.metrics import SequenceDecomposition, mpre
from reflprior.reports import write_table
from reflprior.scorer import BaselineScorer, OracleScorer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--frames", type=int, default=3)
    ap.add_argument("--scorer", choices=("oracle", "baseline"), default="oracle")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    warnings.simplefilter("ignore")

    frames = relight_sequence(args.frames)
    images = [f.image for f in frames]
    rows = [["ground truth", mpre(SequenceDecomposition(images, [f.reflectance for f in frames], [f.shading for f in frames]))]]
    for variant in VARIANTS:
        res = []
        for f in frames:
            scorer = OracleScorer(f.reflectance) if args.scorer == "oracle" else BaselineScorer()
            res.append(alternate_decompose(f.image, scorer, DecomposeConfig(), variant))
        rows.append([variant, mpre(SequenceDecomposition(images, [r.reflectance for r in res], [r.shading for r in res]))])
    for name, value in rows:
        print(f"{name:22s} MPRE {value:.3e}")
    write_table(out / "mpre", ["variant", "mpre"], rows, bar_column=1)


if __name__ == "__main__":
    main()
