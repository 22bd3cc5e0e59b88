"""CLI: train a classifier artifact or serve one over HTTP."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .data import load_labeled_tuples
from .model import EncoderArch
from .service import serve
from .training import TrainingConfig, train


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="fakecti-clf")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune on labeled tuples")
    p.add_argument("--train", required=True, help="labeled tuples JSONL")
    p.add_argument("--val", required=True, help="validation tuples JSONL")
    p.add_argument("--out", required=True, help="artifact output directory")
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-model", default=None,
                   help="local pre-trained checkpoint to fine-tune")
    p.add_argument("--vocab-size", type=int, default=2000)

    p = sub.add_parser("serve", help="serve a trained artifact")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--port", type=int, default=8001)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "train":
        config = TrainingConfig(
            learning_rate=args.lr,
            batch_size=args.batch_size,
            max_epochs=args.max_epochs,
            patience=args.patience,
            seed=args.seed,
            base_model=args.base_model,
            arch=EncoderArch(vocab_size=args.vocab_size),
        )
        result = train(load_labeled_tuples(args.train),
                       load_labeled_tuples(args.val), config, args.out)
        final = result.curves[result.best_epoch]
        print(f"best epoch {result.best_epoch}: val_loss={final.val_loss:.4f} "
              f"val_acc={final.val_acc:.3f}; artifact at {args.out}")
        return 0
    serve(args.model_dir, args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
