"""Command-line pipeline: synth -> detect/annotate -> build-dataset -> train ->
restore -> evaluate -> report.

Every subcommand funnels its randomness through a single --seed flag, resolves
relative paths against COLPO_DATA_DIR (or the working directory), and can read
its defaults from a JSON config file passed as --config.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import click

from . import dataset as ds
from . import reporting
from .detect import DetectorConfig, detect_sr
from .evaluate import (
    EvalReport,
    error_range_table,
    histogram_overlay_report,
    sr_removal_verdict,
    sup_norm_errors,
)
from .imaging import (
    apply_mask,
    max_intensity,
    read_image_png,
    read_mask_png,
    to_u8,
    to_unit,
    write_image_png,
    write_mask_png,
)
from .network import ModelSpec, build_model, load_checkpoint
from .restore import composite as composite_images
from .restore import restore_hidden, restore_sr
from .training import TrainRun, mse_loss, test_error_ci, train, train_ensemble


def _root() -> Path:
    return Path(os.environ.get("COLPO_DATA_DIR", "."))


def _resolve(path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else _root() / p


@click.group()
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON file with per-subcommand default flags.")
@click.pass_context
def main(ctx, config):
    """Specular-reflection removal toolkit."""
    if config:
        ctx.default_map = json.loads(Path(config).read_text())


@main.command()
@click.option("--count", type=int, required=True)
@click.option("--size", type=int, default=64, help="Square image side in pixels.")
@click.option("--seed", type=int, default=0)
@click.option("--images-per-patient", type=int, default=3)
@click.option("--out", type=click.Path(), required=True)
def synth(count, size, seed, images_per_patient, out):
    """Generate a synthetic corpus with injected specular highlights."""
    corpus = ds.synth_corpus(count, size=(size, size), seed=seed,
                             images_per_patient=images_per_patient)
    manifest = ds.save_corpus(corpus, _resolve(out))
    click.echo(f"wrote {len(corpus)} images, manifest {manifest}")


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--output", "output_path", type=click.Path(), required=True)
@click.option("--threshold-factor", type=float, default=0.85)
@click.option("--dilate", type=int, default=0)
def detect(input_path, output_path, threshold_factor, dilate):
    """Detect specular pixels and write the real mask PNG."""
    img = read_image_png(input_path)
    mask = detect_sr(img, DetectorConfig(threshold_factor=threshold_factor,
                                         dilation_radius=dilate))
    write_mask_png(mask, _resolve(output_path))
    click.echo(f"flagged {int((mask == 0).sum())} specular pixels")


@main.command("annotate-serve")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8008)
@click.option("--ui-dir", type=click.Path(), default=None,
              help="Static UI bundle to serve at /.")
def annotate_serve(manifest, host, port, ui_dir):
    """Serve the annotation backend (and UI bundle, if built)."""
    from .service import serve

    if ui_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = candidate if candidate.is_dir() else None
    serve(manifest, host=host, port=port, ui_dir=ui_dir)


def _load_policy(policy_path, seed) -> ds.HiddenRegionPolicy:
    kwargs = {}
    if policy_path:
        raw = json.loads(Path(policy_path).read_text())
        kwargs = {
            "num_regions": tuple(raw.get("num_regions", (1, 4))),
            "region_area_fraction": tuple(raw.get("region_area_fraction", (0.002, 0.05))),
            "shape_family": tuple(raw.get("shape_family",
                                          ("ellipse", "random-blob", "brush-stroke"))),
            "rng_seed": raw.get("rng_seed", 0),
        }
    policy = ds.HiddenRegionPolicy(**kwargs)
    if seed is not None:
        policy.rng_seed = seed
    return policy


@main.command("build-dataset")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--policy", "policy_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Overrides the policy rng seed.")
@click.option("--resolution", type=int, default=0,
              help="Training resolution (square); 0 keeps native size.")
@click.option("--train-count", type=int, default=None)
@click.option("--val-count", type=int, default=None)
@click.option("--test-count", type=int, default=None)
@click.option("--masks-per-image", type=int, default=1)
def build_dataset(manifest, policy_path, out, seed, resolution,
                  train_count, val_count, test_count, masks_per_image):
    """Build hidden masks, samples, and patient-disjoint splits."""
    corpus = ds.load_corpus(manifest)
    if None in (train_count, val_count, test_count):
        split = ds.SplitSpec.from_corpus_size(len(corpus))
    else:
        split = ds.SplitSpec(train_count, val_count, test_count)
    built = ds.build_dataset_dir(
        corpus,
        _load_policy(policy_path, seed),
        split,
        _resolve(out),
        resolution=(resolution, resolution) if resolution else None,
        masks_per_image=masks_per_image,
    )
    counts = {name: len(built.split_ids(name)) for name in ("train", "val", "test")}
    click.echo(f"dataset at {built.root} with splits {counts}")


@main.command("train")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=240)
@click.option("--batch-size", type=int, default=8)
@click.option("--seed", type=int, default=0)
@click.option("--width-multiplier", type=float, default=1.0)
@click.option("--run-id", default="R0")
def train_cmd(dataset_dir, out, epochs, batch_size, seed, width_multiplier, run_id):
    """Train a single network on the built dataset."""
    built = ds.BuiltDataset(dataset_dir)
    spec = ModelSpec(width_multiplier=width_multiplier)
    model = build_model(spec, init_seed=seed)
    run = train(model, built.samples("train"), built.samples("val"),
                epochs=epochs, batch_size=batch_size, seed=seed, run_id=run_id,
                checkpoint_dir=_resolve(out))
    click.echo(f"run {run.run_id}: final validation error {run.final_val_error}")


@main.command("train-ensemble")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--num-seeds", type=int, default=16)
@click.option("--seed-base", type=int, default=0)
@click.option("--epochs", type=int, default=240)
@click.option("--batch-size", type=int, default=8)
@click.option("--width-multiplier", type=float, default=1.0)
def train_ensemble_cmd(dataset_dir, out, num_seeds, seed_base, epochs,
                       batch_size, width_multiplier):
    """Train one network per seed and select the lowest validation error."""
    built = ds.BuiltDataset(dataset_dir)
    spec = ModelSpec(width_multiplier=width_multiplier)
    result = train_ensemble(
        spec, built.samples("train"), built.samples("val"),
        seeds=[seed_base + i for i in range(num_seeds)],
        epochs=epochs, batch_size=batch_size, out_dir=_resolve(out),
    )
    table = ", ".join(f"{r.run_id}={r.final_val_error:.4g}" for r in result.runs)
    click.echo(f"selected {result.selected}; validation errors: {table}")


@main.command("restore")
@click.option("--model", "model_dir", type=click.Path(exists=True), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["sr", "hidden"]), default="sr")
@click.option("--real-mask", type=click.Path(exists=True), default=None)
@click.option("--hidden-mask", type=click.Path(exists=True), default=None)
@click.option("--composite", "do_composite", is_flag=True,
              help="Keep original pixels outside the restored regions.")
@click.option("--threshold-factor", type=float, default=0.85)
@click.option("--output", "output_path", type=click.Path(), required=True)
def restore_cmd(model_dir, input_path, mode, real_mask, hidden_mask,
                do_composite, threshold_factor, output_path):
    """Restore one image; writes a PNG and a sidecar JSON with intensities."""
    model = load_checkpoint(model_dir)
    img = read_image_png(input_path)
    mask = (read_mask_png(real_mask) if real_mask
            else detect_sr(img, DetectorConfig(threshold_factor=threshold_factor)))
    ci = ds.CorpusImage(image_id=Path(input_path).stem, patient_id="cli",
                        image=img, real_mask=mask)

    sidecar: dict = {"image_id": ci.image_id}
    if mode == "sr":
        out_f = restore_sr(model, ci)
        if do_composite:
            out_f = composite_images(out_f, apply_mask(to_unit(img), mask), mask)
        i, prime, r, removed = sr_removal_verdict(ci, to_u8(out_f))
        sidecar.update(int_max_original=i, int_max_masked=prime,
                       int_max_restored=r, removed=removed)
    else:
        if hidden_mask is None:
            raise click.UsageError("--mode hidden requires --hidden-mask")
        sample = ds.build_sample(ci, read_mask_png(hidden_mask))
        out_f = restore_hidden(model, sample)
        if do_composite:
            # hidden zeros come from the network; everything else (including
            # the specular blackout) stays as fed in
            out_f = composite_images(out_f, sample.input_image, sample.restore_mask)
        sidecar.update(int_max_original=max_intensity(img),
                       int_max_restored=max_intensity(to_u8(out_f)),
                       mse_vs_target=mse_loss(out_f, sample.target_image))

    out_path = _resolve(output_path)
    write_image_png(to_u8(out_f), out_path)
    out_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    click.echo(f"restored image written to {out_path}")


@main.command("evaluate")
@click.option("--model", "model_dir", type=click.Path(exists=True), required=True)
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test")
@click.option("--out", type=click.Path(), required=True)
def evaluate_cmd(model_dir, dataset_dir, split, out):
    """Evaluate hidden-region restoration and specular removal on a split."""
    model = load_checkpoint(model_dir)
    built = ds.BuiltDataset(dataset_dir)
    out_dir = _resolve(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    mses = []
    reports = []
    for ci in built.corpus(split):
        hidden = read_mask_png(built.root / built.meta["hidden_masks"][ci.image_id][0])
        sample = ds.build_sample(ci, hidden)
        restored_f = restore_hidden(model, sample)
        expected_u8, restored_u8 = to_u8(sample.target_image), to_u8(restored_f)

        sr_u8 = to_u8(restore_sr(model, ci))
        i, prime, r, removed = sr_removal_verdict(ci, sr_u8)

        report = EvalReport(
            image_id=ci.image_id,
            sup_errors=sup_norm_errors(expected_u8, restored_u8),
            range_pcts=error_range_table(expected_u8, restored_u8),
            int_max_I=i, int_max_prime=prime, int_max_r=r, sr_removed=removed,
            mse=mse_loss(restored_f, sample.target_image),
        )
        (out_dir / f"{ci.image_id}.json").write_text(report.to_json())
        histogram_overlay_report(expected_u8, restored_u8, out_dir / "figures",
                                 stem=f"{ci.image_id}_hist")
        mses.append(report.mse)
        reports.append(report)

    reporting.write_sup_error_table(reports, out_dir / "table3.csv")
    reporting.write_error_range_table(reports, out_dir / "table4.csv")
    reporting.write_intensity_table(reports, out_dir / "table5.csv")
    summary = {"split": split, "images": len(mses)}
    if len(mses) >= 2:
        mean, half = test_error_ci(mses)
        summary["mse_mean"] = mean
        summary["mse_ci95_half_width"] = half
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    click.echo(f"evaluated {len(mses)} images into {out_dir}")


@main.command("report")
@click.option("--eval-dir", type=click.Path(exists=True), required=True)
@click.option("--ensemble-dir", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
def report_cmd(eval_dir, ensemble_dir, out):
    """Aggregate per-image reports into the table CSVs and figures."""
    eval_dir = Path(eval_dir)
    reports = sorted(
        (EvalReport.from_json(p.read_text())
         for p in eval_dir.glob("*.json") if p.name != "summary.json"),
        key=lambda r: r.image_id,
    )
    if not reports:
        raise click.ClickException(f"no evaluation reports found in {eval_dir}")

    runs = None
    out_dir = _resolve(out)
    if ensemble_dir:
        ensemble_dir = Path(ensemble_dir)
        runs = [TrainRun.from_json(p.read_text())
                for p in sorted(ensemble_dir.glob("R*/run.json"))]
        ensemble_json = ensemble_dir / "ensemble.json"
        if ensemble_json.exists():
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "ensemble.json").write_text(ensemble_json.read_text())

    artifacts = reporting.write_report(reports, out_dir, runs=runs)
    click.echo("wrote " + ", ".join(str(p) for p in artifacts.values()))


if __name__ == "__main__":
    main()
