"""Cross-validated accuracy as a function of the mixup alpha."""
import logging

from _toy import common_args, toy_clips

from escnet.harness import alpha_sweep, desk_config, write_rows_csv
from escnet.mixup import ALPHA_GRID


def main():
    p = common_args(__doc__)
    p.add_argument("--alphas", default=",".join(map(str, ALPHA_GRID)))
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    clips = toy_clips(args.root, args.kind, args.seed)
    alphas = [float(a) for a in args.alphas.split(",")]
    rows = alpha_sweep(clips, desk_config(epochs=args.epochs, seed=args.seed), alphas)
    write_rows_csv(f"{args.root}/alpha_sweep.csv", ("alpha", "mean_accuracy"), rows)
    for alpha, acc in rows:
        print(f"alpha {alpha:.2f}: {acc:.4f}")


if __name__ == "__main__":
    main()
