"""Proposed CNN versus VGG10 on the synthetic set, with identical batches."""
import logging

from _toy import common_args, toy_clips

from escnet.harness import compare_architectures, desk_config, write_rows_csv


def main():
    args = common_args(__doc__).parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    clips = toy_clips(args.root, args.kind, args.seed)
    results = compare_architectures(clips, desk_config(epochs=args.epochs, seed=args.seed))
    rows = [(arch.value, r.mean_accuracy, r.mean_train_accuracy) for arch, r in results.items()]
    write_rows_csv(f"{args.root}/compare.csv", ("arch", "mean_accuracy", "mean_train_accuracy"), rows)
    for arch, acc, train in rows:
        print(f"{arch}: val {acc:.4f} train {train:.4f}")
    digests = {tuple(f.data_digest for f in r.folds) for r in results.values()}
    print("identical batches:", len(digests) == 1)


if __name__ == "__main__":
    main()
