"""Command-line entry points wiring the whole pipeline together.

Stages: synth -> split -> train -> eval, plus predict on trained bundles,
report re-rendering, and an augment-preview debug helper.  Every stage is
driven by one JSON config (see config.py) and the run seed; each stage
writes a provenance record (stage, seed, config hash, input digests) next
to its outputs so results can be traced and reproduced.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import augment as aug
from . import config as cfgmod
from . import ensemble as ens
from . import imgio
from . import metrics
from . import synth as synthmod
from .rng import make_rng


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_provenance(dirpath, stage, cfg_dict, inputs) -> None:
    record = {
        "stage": stage,
        "seed": cfg_dict["seed"],
        "config_sha256": cfgmod.config_hash(cfg_dict),
        "inputs": {os.path.basename(p): _sha256_file(p) for p in inputs},
    }
    with open(os.path.join(dirpath, "provenance.json"), "w", encoding="utf-8") as f:
        json.dump(record, f, sort_keys=True, indent=2)
        f.write("\n")


def _resolve_entries(entries, base_dir):
    resolved = []
    for e in entries:
        path = e.path if os.path.isabs(e.path) else os.path.join(base_dir, e.path)
        resolved.append(imgio.ManifestEntry(path=os.path.normpath(path), label=e.label))
    return resolved


def _split_dir(cfg):
    return os.path.join(cfg.outdir, "split")


def _bundle_dir(cfg):
    return os.path.join(cfg.outdir, "bundle")


# --------------------------------------------------------------------------
# Stage implementations


def cmd_synth(cfg, cfg_dict, args) -> int:
    dataset_dir = os.path.join(cfg.outdir, "dataset")
    t0 = time.perf_counter()
    manifest = synthmod.write_dataset(cfg.synth, cfg.seed, dataset_dir)
    _write_provenance(dataset_dir, "synth", cfg_dict, [])
    n = cfg.synth.n_negative + cfg.synth.n_positive
    print(f"wrote {n} images and {manifest} in {time.perf_counter() - t0:.1f}s")
    return 0


def cmd_split(cfg, cfg_dict, args) -> int:
    manifest = args.manifest or cfg.manifest or os.path.join(cfg.outdir, "dataset", "manifest.csv")
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"missing artifact: dataset manifest {manifest} (run synth first?)")
    entries = _resolve_entries(imgio.load_manifest(manifest), os.path.dirname(os.path.abspath(manifest)))
    split = imgio.split_dataset(entries, cfg.seed)
    out = _split_dir(cfg)
    imgio.save_split(split, out)
    _write_provenance(out, "split", cfg_dict, [manifest])
    print(f"split {len(entries)} entries -> train {len(split.train)} / "
          f"validation {len(split.validation)} / test {len(split.test)} in {out}")
    return 0


def _load_split(cfg, split_dir=None):
    sdir = split_dir or _split_dir(cfg)
    if not os.path.exists(os.path.join(sdir, "train.csv")):
        raise FileNotFoundError(f"missing artifact: split directory {sdir} (run split first?)")
    return imgio.load_split(sdir), sdir


def _subset_scores(model, entries):
    images = [imgio.load_image(e.path) for e in entries]
    labels = [e.label for e in entries]
    ens_scores, branch_scores = ens.score_images(model, images)
    return ens_scores, branch_scores, labels


def _samples(scores, labels):
    return [metrics.ScoredSample(score=float(s), label=int(l))
            for s, l in zip(scores, labels)]


def cmd_train(cfg, cfg_dict, args) -> int:
    split, sdir = _load_split(cfg, args.split)
    t0 = time.perf_counter()
    model = ens.train_ensemble(split, cfg.ensemble, cfg.train, cfg.augment,
                               cfg.seed, parallel=args.parallel_branches, log=print)
    sel_entries = split.validation if cfg.cutoff_set == "validation" else split.test
    scores, _, labels = _subset_scores(model, sel_entries)
    samples = _samples(scores, labels)
    cutoff, sp, se = metrics.choose_cutoff(metrics.roc_curve(samples), samples)
    model.cutoff = cutoff
    model.metrics = {"cutoff_set": cfg.cutoff_set,
                     "cutoff_sp": metrics.fmt_half_up(sp, 2),
                     "cutoff_se": metrics.fmt_half_up(se, 2)}
    bdir = _bundle_dir(cfg)
    ens.save_bundle(model, bdir)
    _write_provenance(bdir, "train", cfg_dict,
                      [os.path.join(sdir, f"{n}.csv") for n in ("train", "validation", "test")])
    print(f"trained {len(model.branches)} branches in {time.perf_counter() - t0:.1f}s; "
          f"cutoff {cutoff:.6f} (Sp {sp:.2f}, Se {se:.2f} on {cfg.cutoff_set}); bundle in {bdir}")
    return 0


def cmd_eval(cfg, cfg_dict, args) -> int:
    bdir = args.bundle or _bundle_dir(cfg)
    model = ens.load_bundle(bdir)
    split, sdir = _load_split(cfg, args.split)
    cutoff_set = args.cutoff_set or cfg.cutoff_set

    test_ens, test_branch, test_labels = _subset_scores(model, split.test)
    if cutoff_set == "test":
        sel_ens, sel_branch, sel_labels = test_ens, test_branch, test_labels
    else:
        sel_ens, sel_branch, sel_labels = _subset_scores(model, split.validation)

    eval_dir = os.path.join(cfg.outdir, "eval")
    os.makedirs(eval_dir, exist_ok=True)
    rows, cutoffs = [], {}
    named = [(f"Model {b.size}", test_branch[i], sel_branch[i])
             for i, b in enumerate(model.branches)]
    named.append(("Ensemble", test_ens, sel_ens))
    for name, test_scores, sel_scores in named:
        test_samples = _samples(test_scores, test_labels)
        sel_samples = _samples(sel_scores, sel_labels)
        curve = metrics.roc_curve(test_samples)
        auc_value = metrics.auc(curve)
        threshold, _, _ = metrics.choose_cutoff(metrics.roc_curve(sel_samples), sel_samples)
        sp, se, acc = metrics.sp_se_acc(metrics.confusion_at(test_samples, threshold))
        rows.append((name, auc_value, sp, se, acc))
        cutoffs[name] = threshold
        slug = name.lower().replace(" ", "_")
        metrics.save_roc(curve, os.path.join(eval_dir, f"roc_{slug}.txt"))

    text, records = metrics.report(rows)
    with open(os.path.join(eval_dir, "report.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    metrics.save_report(records, os.path.join(eval_dir, "report.json"),
                        extra={"cutoff_set": cutoff_set,
                               "cutoffs": {k: repr(v) for k, v in cutoffs.items()}})
    inputs = [os.path.join(sdir, "test.csv"),
              os.path.join(bdir, ens.BUNDLE_MANIFEST)]
    _write_provenance(eval_dir, "eval", cfg_dict, inputs)
    print(text, end="")
    print(f"report written to {eval_dir}")
    return 0


def cmd_predict(cfg, cfg_dict, args) -> int:
    model = ens.load_bundle(args.bundle or _bundle_dir(cfg))
    cutoff = model.cutoff if model.cutoff is not None else 0.5
    for path in args.images:
        pred = ens.predict(model, imgio.load_image(path))
        decision = ens.classify(pred, cutoff)
        print(f"{path} score {pred.score:.6f} class {decision}")
    return 0


def cmd_report(cfg, cfg_dict, args) -> int:
    records = metrics.load_report(args.results)
    print(metrics.render_records(records), end="")
    return 0


def cmd_augment_preview(cfg, cfg_dict, args) -> int:
    img = imgio.load_image(args.image)
    rng = make_rng(cfg.seed, "augment-preview")
    params = aug.sample_params(rng, cfg.augment)
    out = aug.apply(img, params)
    imgio.save_image(out, args.preview_out)
    print(f"flip={params.flip} scale={params.scale:.4f} crop=({params.crop_dx:+.4f}, "
          f"{params.crop_dy:+.4f}) shift={params.shift:+.4f} -> {args.preview_out}")
    return 0


# --------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptxens",
        description="Multi-size CNN ensemble pipeline for binary grayscale classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted config override, repeatable")
        return p

    common(sub.add_parser("synth", help="generate the synthetic dataset"))
    p = common(sub.add_parser("split", help="stratified train/validation/test split"))
    p.add_argument("--manifest", default=None, help="dataset manifest to split")
    p = common(sub.add_parser("train", help="train the ensemble on the split"))
    p.add_argument("--split", default=None, help="split directory (default <outdir>/split)")
    p.add_argument("--parallel-branches", action="store_true",
                   help="train branches in parallel threads (result-identical)")
    p = common(sub.add_parser("eval", help="evaluate the trained bundle"))
    p.add_argument("--bundle", default=None, help="bundle directory (default <outdir>/bundle)")
    p.add_argument("--split", default=None, help="split directory (default <outdir>/split)")
    p.add_argument("--cutoff-set", choices=cfgmod.CUTOFF_SETS, default=None,
                   help="where to choose the operating cutoff")
    p = common(sub.add_parser("predict", help="score images with a trained bundle"))
    p.add_argument("--bundle", default=None, help="bundle directory (default <outdir>/bundle)")
    p.add_argument("--images", nargs="+", required=True, help="image files to score")
    p = common(sub.add_parser("report", help="re-render a stored report"))
    p.add_argument("--results", required=True, help="report.json from a prior eval")
    p = common(sub.add_parser("augment-preview", help="apply one augmentation draw to an image"))
    p.add_argument("--image", required=True)
    p.add_argument("--save", dest="preview_out", required=True, help="output image path")
    return parser


_HANDLERS = {
    "synth": cmd_synth,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "report": cmd_report,
    "augment-preview": cmd_augment_preview,
}


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"outdir={args.out}")
    cfg, cfg_dict = cfgmod.load_config(args.config, overrides)
    os.makedirs(cfg.outdir, exist_ok=True)
    return _HANDLERS[args.command](cfg, cfg_dict, args)


def main() -> int:
    try:
        return run()
    except (OSError, ValueError, KeyError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
