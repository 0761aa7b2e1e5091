"""Five-fold cross-validation of the proposed CNN with mixup on the synthetic set."""
import logging
import time

from _toy import common_args, toy_clips

from escnet.harness import cross_validate, desk_config, write_rows_csv
from escnet.mixup import MixupConfig


def main():
    p = common_args(__doc__)
    p.add_argument("--no-mixup", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    clips = toy_clips(args.root, args.kind, args.seed)
    cfg = desk_config(epochs=args.epochs, seed=args.seed, mixup=MixupConfig(0.2, not args.no_mixup))
    t0 = time.time()
    res = cross_validate(clips, cfg)
    rows = [(f.fold, f.report.accuracy, f.train_accuracy) for f in res.folds]
    write_rows_csv(f"{args.root}/crossval_{args.kind}.csv", ("fold", "accuracy", "train_accuracy"), rows)
    for fold, acc, train in rows:
        print(f"fold {fold}: val {acc:.4f} train {train:.4f}")
    print(f"mean accuracy {res.mean_accuracy:.4f}  train {res.mean_train_accuracy:.4f}  "
          f"({time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()
