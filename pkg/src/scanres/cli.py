"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import corpus as corpus_mod
from . import evaluation, learn, noise, raster, sffs
from .errors import ScanresError
from .metrics import extract_features

_SEED_OPT = dict(
    type=int, default=0, show_default=True, envvar="SCANRES_SEED",
    help="deterministic seed (falls back to $SCANRES_SEED)",
)


@click.group()
def cli():
    """Decide the minimum acceptable scan resolution for raster regions."""


@cli.command()
@click.option("--n", "n_regions", type=int, required=True, help="number of regions")
@click.option("--size", type=int, default=48, show_default=True)
@click.option("--jitter", type=float, default=0.07, show_default=True,
              help="stddev of the proxy-rater threshold jitter")
@click.option("--seed", **_SEED_OPT)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def synth(n_regions, size, jitter, seed, out_dir):
    """Generate a synthetic corpus with proxy ratings."""
    spec = corpus_mod.SynthSpec(
        n_regions=n_regions, size=size, seed=seed, rating_jitter=jitter
    )
    manifest_path, ratings_path = corpus_mod.synth_corpus(spec, out_dir)
    click.echo(json.dumps(
        {"manifest": str(manifest_path), "ratings": str(ratings_path), "seed": seed}
    ))


@cli.command()
@click.option("--image", type=click.Path(path_type=Path), required=True)
@click.option("--target-dpi", type=click.Choice(["100", "150", "200", "300"]),
              required=True)
@click.option("--out-at-base", type=click.Path(path_type=Path), required=True)
@click.option("--out-native", type=click.Path(path_type=Path), default=None)
def emulate(image, target_dpi, out_at_base, out_native):
    """Emulate a low-dpi scan of a 300 dpi image."""
    img = raster.load_image(image, raster.BASE_DPI)
    pair = raster.emulate_dpi(img, int(target_dpi))
    raster.save_image(pair.at_base, out_at_base)
    if out_native:
        raster.save_image(pair.native_lowres, out_native)
    click.echo(json.dumps({"at_base": str(out_at_base),
                           "native": str(out_native) if out_native else None}))


@cli.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv",
              show_default=True)
@click.option("--ratings", "ratings_path", type=click.Path(path_type=Path),
              default=None,
              help="emit a labeled dataset (with optional augmentation) instead "
                   "of plain feature rows")
@click.option("--gaussian-copies", type=int, default=0, show_default=True)
@click.option("--sp-copies", type=int, default=0, show_default=True)
@click.option("--gaussian-variance", type=float, default=None)
@click.option("--sp-density", type=float, default=None)
@click.option("--target", type=float, default=0.63, show_default=True)
@click.option("--tol", type=float, default=0.01, show_default=True)
@click.option("--seed", **_SEED_OPT)
def features(manifest_path, out_path, fmt, ratings_path, gaussian_copies, sp_copies,
             gaussian_variance, sp_density, target, tol, seed):
    """Extract the nine features per (region, dpi)."""
    manifest = corpus_mod.load_manifest(manifest_path)
    if ratings_path is not None:
        plan = corpus_mod.AugmentationPlan(
            gaussian_copies=gaussian_copies,
            sp_copies=sp_copies,
            gaussian_variance=gaussian_variance,
            sp_density=sp_density,
            target=noise.CalibrationTarget(target_mean_ssim=target, tolerance=tol),
            seed=seed,
        )
        samples = corpus_mod.build_dataset(
            manifest, corpus_mod.load_ratings(ratings_path), plan
        )
        corpus_mod.save_samples(samples, out_path)
        click.echo(json.dumps(
            {"samples": len(samples), "out": str(out_path), "seed": seed}
        ))
        return

    rows = []
    for region_id, crop in sorted(corpus_mod._load_regions(manifest)):
        for dpi in sorted(raster.DPI_LEVELS):
            fv = extract_features(crop, raster.emulate_dpi(crop, dpi), dpi)
            rows.append((region_id, dpi, fv.as_array()))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        if fmt == "csv":
            fh.write(",".join(["region_id", "dpi"] + [f"f{i}" for i in range(9)]) + "\n")
            for region_id, dpi, arr in rows:
                fh.write(",".join([region_id, str(dpi)] + [repr(v) for v in arr]) + "\n")
        else:
            for region_id, dpi, arr in rows:
                fh.write(json.dumps(
                    {"region_id": region_id, "dpi": dpi, "features": list(arr)},
                    sort_keys=True,
                ) + "\n")
    click.echo(json.dumps({"rows": len(rows), "out": str(out_path)}))


@cli.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--kind", type=click.Choice(["gaussian", "sp"]), required=True)
@click.option("--param", type=float, default=None,
              help="noise parameter; omit with --calibrate")
@click.option("--calibrate", "do_calibrate", is_flag=True, default=False)
@click.option("--target", type=float, default=0.63, show_default=True)
@click.option("--tol", type=float, default=0.01, show_default=True)
@click.option("--copies", type=int, default=1, show_default=True)
@click.option("--seed", **_SEED_OPT)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def augment(manifest_path, kind, param, do_calibrate, target, tol, copies, seed,
            out_dir):
    """Write noise-augmented copies of every region plus a JSONL ledger."""
    if (param is None) == (not do_calibrate):
        raise click.UsageError("give exactly one of --param or --calibrate")
    kind_full = "salt_pepper" if kind == "sp" else "gaussian"
    manifest = corpus_mod.load_manifest(manifest_path)
    crops = sorted(corpus_mod._load_regions(manifest))
    if do_calibrate:
        param = noise.calibrate_noise(
            kind_full, [img for _, img in crops][:20],
            noise.CalibrationTarget(target_mean_ssim=target, tolerance=tol),
            seed=seed,
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger_path = out_dir / "augment_ledger.jsonl"
    from .metrics import ssim as ssim_fn

    with ledger_path.open("w", encoding="utf-8") as ledger:
        for i, (region_id, crop) in enumerate(crops):
            for c in range(copies):
                seed_seq = np.random.SeedSequence(entropy=seed, spawn_key=(i, c))
                noisy = noise.apply_noise(crop, kind_full, param, seed_seq)
                name = f"{region_id}_{kind}{c}.png"
                raster.save_image(noisy, out_dir / name)
                ledger.write(json.dumps({
                    "source": region_id,
                    "kind": kind_full,
                    "parameter": param,
                    "seed": seed,
                    "ssim": ssim_fn(crop, noisy),
                }, sort_keys=True) + "\n")
    click.echo(json.dumps({"parameter": param, "ledger": str(ledger_path),
                           "images": len(crops) * copies}))


@cli.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--kind", type=click.Choice(["gaussian", "sp"]), required=True)
@click.option("--target", type=float, default=0.63, show_default=True)
@click.option("--tol", type=float, default=0.01, show_default=True)
@click.option("--seed", **_SEED_OPT)
def calibrate(manifest_path, kind, target, tol, seed):
    """Search the noise parameter whose mean SSIM matches the target."""
    kind_full = "salt_pepper" if kind == "sp" else "gaussian"
    manifest = corpus_mod.load_manifest(manifest_path)
    crops = [img for _, img in sorted(corpus_mod._load_regions(manifest))][:20]
    param = noise.calibrate_noise(
        kind_full, crops,
        noise.CalibrationTarget(target_mean_ssim=target, tolerance=tol), seed=seed,
    )
    measured = noise.mean_ssim_under_noise(crops, kind_full, param, seed, 10_000)
    click.echo(json.dumps({"kind": kind_full, "parameter": param,
                           "target": target, "tolerance": tol,
                           "measured_mean_ssim": measured}))


def _parse_mask(text):
    if not text:
        return None
    idx = [int(v) for v in text.split(",") if v.strip() != ""]
    mask = np.zeros(9, dtype=bool)
    mask[idx] = True
    return mask


@cli.command()
@click.option("--dataset", "dataset_path", type=click.Path(path_type=Path),
              required=True, help="labeled sample CSV from `features --ratings`")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--c", "-C", "c_value", type=float, default=1.0, show_default=True)
@click.option("--kernel", type=click.Choice(["rbf", "linear"]), default="rbf",
              show_default=True)
@click.option("--gamma", type=float, default=None)
@click.option("--mask", type=str, default=None,
              help="comma-separated canonical feature indices to keep")
@click.option("--grid", is_flag=True, default=False,
              help="3x3 grid search over C and gamma before training")
@click.option("--seed", **_SEED_OPT)
def train(dataset_path, out_path, c_value, kernel, gamma, mask, grid, seed):
    """Train the SVM on a labeled dataset and persist the model JSON."""
    samples = corpus_mod.load_samples(dataset_path)
    X = np.asarray([s.features.as_array() for s in samples])
    y = [s.label for s in samples]
    feature_mask = _parse_mask(mask)
    if grid:
        Xm = X[:, feature_mask] if feature_mask is not None else X
        best = evaluation.grid_search_svm(Xm, y, seed=seed)
        c_value, gamma = best["C"], best["gamma"]
        click.echo(json.dumps({"grid_best": best}), err=True)
    model = learn.fit_svm_model(
        X, y, C=c_value, kernel=kernel, gamma=gamma, feature_mask=feature_mask
    )
    learn.save_model(model, out_path)
    click.echo(json.dumps({
        "out": str(out_path), "C": c_value, "kernel": kernel,
        "gamma": model.gamma, "support_vectors": int(model.support_vectors.shape[0]),
        "seed": seed,
    }))


@cli.command()
@click.option("--dataset", "dataset_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--d", "d_target", type=int, default=9, show_default=True)
@click.option("--seed", **_SEED_OPT)
def select(dataset_path, d_target, seed):
    """Run SFFS feature selection and print ranking, subset, and trace."""
    samples = [s for s in corpus_mod.load_samples(dataset_path)]
    X = np.asarray([s.features.as_array() for s in samples])
    y = [s.label for s in samples]
    result = sffs.sffs_select(X, y, d_target, eval_seed=seed)
    click.echo(json.dumps({"seed": seed, **result.to_dict()}, indent=2))


@cli.command()
@click.option("--dataset", "dataset_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--runs", type=int, default=20, show_default=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--c", "-C", "c_value", type=float, default=1.0, show_default=True)
@click.option("--kernel", type=click.Choice(["rbf", "linear"]), default="rbf",
              show_default=True)
@click.option("--gamma", type=float, default=None)
@click.option("--mask", type=str, default=None)
@click.option("--json-out", type=click.Path(path_type=Path), default=None)
@click.option("--seed", **_SEED_OPT)
def evaluate(dataset_path, runs, k, c_value, kernel, gamma, mask, json_out, seed):
    """Repeated stratified k-fold CV; augmented rows train-only."""
    samples = corpus_mod.load_samples(dataset_path)
    config = evaluation.TrainConfig(
        C=c_value, kernel=kernel, gamma=gamma,
        feature_mask=tuple(_parse_mask(mask)) if mask else None,
    )
    report = evaluation.cross_validate(samples, runs, k, seed, config)
    payload = {"seed": seed, **report.to_dict()}
    if json_out:
        json_out.parent.mkdir(parents=True, exist_ok=True)
        json_out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps(payload))
    click.echo(_format_report(report), err=True)


def _format_report(report) -> str:
    lines = [
        f"runs={report.runs}  mean accuracy={report.mean_accuracy:.4f}  "
        f"variance={report.variance_accuracy:.6f}",
        "class           precision  recall   f1",
    ]
    for label, stats in report.per_class.items():
        lines.append(
            f"{label.value:<14}  {stats['precision']:.3f}      "
            f"{stats['recall']:.3f}    {stats['f1']:.3f}"
        )
    lines.append("confusion (rows = actual [acceptable, unacceptable]):")
    for row in report.confusion:
        lines.append("  " + "  ".join(f"{v:.3f}" for v in row))
    return "\n".join(lines)


@cli.command()
@click.option("--model", "model_path", type=click.Path(path_type=Path), required=True)
@click.option("--image", type=click.Path(path_type=Path), required=True)
@click.option("--segmentation", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
def predict(model_path, image, segmentation, out_path):
    """Minimum acceptable dpi for every raster_image region of a page."""
    model = learn.load_model(model_path)
    page = raster.load_image(image, raster.BASE_DPI)
    seg = raster.load_segmentation(segmentation)
    result = {
        region.id: learn.min_acceptable_dpi(model, page, region)
        for region in seg.regions
        if region.cls == "raster_image"
    }
    text = json.dumps(result, indent=2, sort_keys=True)
    if out_path:
        out_path.write_text(text + "\n")
    click.echo(text)


@cli.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--ratings-out", type=click.Path(path_type=Path), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8077, show_default=True)
@click.option("--reference", is_flag=True, default=False,
              help="expose the 300 dpi reference next to each stimulus")
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path), default=None,
              help="directory of built UI assets to serve at /")
@click.option("--seed", **_SEED_OPT)
def serve(manifest_path, ratings_out, host, port, reference, ui_dir, seed):
    """Host the rating API plus the static rating UI."""
    import uvicorn

    from .server import build_app

    manifest = corpus_mod.load_manifest(manifest_path)
    app = build_app(manifest, ratings_out, seed=seed, reference=reference,
                    static_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except ScanresError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
