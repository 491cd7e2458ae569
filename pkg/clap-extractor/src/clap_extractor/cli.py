"""Command line front end.

Three subcommands mirroring the three library operations:

    clap-extractor extract-audio  --manifest clips.tsv --out audio.clapemb
    clap-extractor extract-prompts --prompt0 "..." --prompt1 "..." --out p.clapemb
    clap-extractor finetune --manifest clips.tsv --shot 25 --seed 7 --out ft.clapemb

Exit codes match the harness convention: 2 usage, 3 data or environment
(bad manifests, unreadable inputs, checkpoint failures), 4 numeric
(training diverged). Stores are written through the harness writer, which
also emits the sidecar manifest.
"""

from __future__ import annotations

import argparse
import logging
import sys

from clapadapt.datastore import write_store

from .errors import CheckpointLoadFailure, ExtractorError, TrainingDiverged
from .extract import extract_audio, extract_prompts
from .finetune import FinetuneConfig, finetune_and_dump
from .manifest import read_audio_manifest
from .specs import DEFAULT_CHECKPOINT, ExtractionSpec, PromptSpec


def _spec_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", default=DEFAULT_CHECKPOINT,
                   help=f"encoder checkpoint (default: {DEFAULT_CHECKPOINT}); "
                        f"'local:tiny?dim=512&seed=0&rate=16000' for the offline test encoder")
    p.add_argument("--rate", type=int, default=None,
                   help="target sampling rate (default: the encoder's requirement)")
    p.add_argument("--duration", type=float, default=10.0,
                   help="fixed clip seconds, zero-padded or tail-truncated (default: 10.0)")
    p.add_argument("--batch-size", type=int, default=8,
                   help="inference batch size (default: 8)")


def _build_spec(args, bundle_rate_probe=None) -> ExtractionSpec:
    rate = args.rate
    if rate is None:
        # defer to the loaded encoder's requirement
        from .encoder import load_encoder
        bundle = bundle_rate_probe or load_encoder(args.checkpoint)
        rate = bundle.sampling_rate
        args._bundle = bundle
    return ExtractionSpec(checkpoint=args.checkpoint, sampling_rate=rate,
                          clip_seconds=args.duration, batch_size=args.batch_size)


def _bundle_of(args):
    return getattr(args, "_bundle", None)


def cmd_extract_audio(args) -> int:
    spec = _build_spec(args)
    items = read_audio_manifest(args.manifest)
    store = extract_audio(items, spec, bundle=_bundle_of(args))
    h = write_store(store, args.out)
    skipped = len(store.meta.get("skipped", []))
    print(f"wrote {args.out} ({len(store)} records, dim {store.dim}, "
          f"{skipped} skipped, store_hash {h})")
    return 0


def cmd_extract_prompts(args) -> int:
    spec = _build_spec(args)
    prompts = PromptSpec({0: args.prompt0, 1: args.prompt1})
    store = extract_prompts(prompts, spec, bundle=_bundle_of(args))
    h = write_store(store, args.out)
    print(f"wrote {args.out} (2 prompt records, dim {store.dim}, store_hash {h})")
    return 0


def cmd_finetune(args) -> int:
    if args.shot < 1:
        print("error: finetune needs --shot >= 1; shot 0 is the frozen store",
              file=sys.stderr)
        return 2
    spec = _build_spec(args)
    cfg = FinetuneConfig(epochs=args.epochs, head_lr=args.head_lr,
                         encoder_lr=args.encoder_lr, weight_decay=args.weight_decay,
                         temperature=args.temperature, head_hidden=args.head_hidden)
    items = read_audio_manifest(args.manifest)
    store = finetune_and_dump(items, args.shot, args.seed, cfg, spec,
                              bundle=_bundle_of(args))
    h = write_store(store, args.out)
    print(f"wrote {args.out} ({len(store)} records, dim {store.dim}, "
          f"final loss {store.meta['final_loss']:.4f}, store_hash {h})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clap-extractor",
        description="Embed audio manifests and class prompts into stores "
                    "for the evaluation harness; optionally fine-tune.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-audio", help="embed an audio manifest into a store")
    _spec_args(p)
    p.add_argument("--manifest", required=True,
                   help="delimited text: path, id, language, split, label")
    p.add_argument("--out", required=True, help="output store path")
    p.set_defaults(func=cmd_extract_audio)

    p = sub.add_parser("extract-prompts", help="embed one prompt per class")
    _spec_args(p)
    p.add_argument("--prompt0", required=True, help="prompt text for class 0")
    p.add_argument("--prompt1", required=True, help="prompt text for class 1")
    p.add_argument("--out", required=True, help="output store path")
    p.set_defaults(func=cmd_extract_prompts)

    p = sub.add_parser("finetune",
                       help="train head + last two audio blocks on a k-shot "
                            "support set and dump adapted embeddings")
    _spec_args(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--shot", type=int, required=True, help="k per language per class, >= 1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--head-lr", type=float, default=1e-4)
    p.add_argument("--encoder-lr", type=float, default=None,
                   help="default: head-lr / 10")
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--temperature", type=float, default=0.07)
    p.add_argument("--head-hidden", type=int, default=None,
                   help="head hidden width (default: encoder embed dim)")
    p.add_argument("--out", required=True, help="adapted store path")
    p.set_defaults(func=cmd_finetune)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="[clap-extractor] %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 4
    except (ExtractorError, CheckpointLoadFailure) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
