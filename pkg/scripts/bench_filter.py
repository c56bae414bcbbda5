"""Time the Nystrom filter build and one message-passing pass.

Equivalent to ``reflprior bench filter``; prints the JSON report.
"""

import argparse
import json

from reflprior.bench import bench_filter


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=65536)
    ap.add_argument("--k", type=int, default=64)
    ap.add_argument("--labels", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--scorer", choices=("baseline", "oracle"), default="baseline")
    args = ap.parse_args()
    print(json.dumps(bench_filter(args.n, args.k, args.labels, args.repeats, args.scorer), indent=2))


if __name__ == "__main__":
    main()
