#!/usr/bin/env python3
"""Generate a pair of synthetic blob CSVs (train/test) for quick experiments.

Both splits are cut from a single draw so they share the same cluster means.
"""

import argparse
from pathlib import Path

from dssfn.data import LabeledDataset, save_csv, synthetic_blobs


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="datasets", help="where to write the CSVs")
    ap.add_argument("--prefix", default="blobs", help="file name prefix")
    ap.add_argument("-p", type=int, default=5, help="feature dimension")
    ap.add_argument("-q", type=int, default=3, help="number of classes")
    ap.add_argument("--train", type=int, default=400)
    ap.add_argument("--test", type=int, default=200)
    ap.add_argument("--separation", type=float, default=6.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    full = synthetic_blobs(args.p, args.q, args.train + args.test, args.separation, args.seed)
    cut = args.train
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = LabeledDataset(x=full.x[:, :cut], t=full.t[:, :cut], labels=full.labels[:cut])
    save_csv(train, out / f"{args.prefix}_train.csv")
    print(f"wrote {out / f'{args.prefix}_train.csv'} ({train.num_samples} samples)")
    if args.test > 0:
        test = LabeledDataset(x=full.x[:, cut:], t=full.t[:, cut:], labels=full.labels[cut:])
        save_csv(test, out / f"{args.prefix}_test.csv")
        print(f"wrote {out / f'{args.prefix}_test.csv'} ({test.num_samples} samples)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
