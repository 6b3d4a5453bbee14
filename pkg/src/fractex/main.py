"""CLI entry point for fractex."""

import json
import logging
import sys
from contextlib import redirect_stdout
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
import typer

from fractex.config import RunConfig, get_settings, load_run_config
from fractex.errors import FractexError, ParameterError
from fractex.models.hurst import FbmSpec, Nonlinearity, Pooling, PoolSpec
from fractex.models.network import ArchSpec, NetworkParams, TrainingLog
from fractex.models.report import UqMethod
from fractex.models.volume import Volume
from fractex.models.wavelet import Boundary, WaveletFamily, WaveletSpec
from fractex.services.dataset import load_dataset, make_synthetic_dataset
from fractex.services.fbm_synthesis import synth_fbm
from fractex.services.fractal import (
    default_hurst_scales,
    estimate_hurst,
    fd_map,
    increment_variance_hurst,
    pooled_hurst,
)
from fractex.services.metrics import region_report, summarize
from fractex.services.preprocessing import crop_volume, embed_volume, normalize_volume, restore_labels
from fractex.services.segnet import fd_channel, forward, predict
from fractex.services.trainer import Sample, prepare_samples, train_ensemble
from fractex.services.uncertainty import (
    combined_predict,
    ensemble_predict,
    mc_dropout_predict,
    predictive_entropy,
    tta_predict,
)
from fractex.storage.checkpoint import load_checkpoint, save_checkpoint
from fractex.storage.reports import render_table, report_json, save_report
from fractex.storage.volume_file import load_volume, save_volume
from fractex.utils.atomic import atomic_write_text
from fractex.utils.rng import derive_seeds

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="fractex",
    help="Fractal-texture analysis and wavelet + FD segmentation",
    add_completion=False,
)


@dataclass
class CliState:
    """Global options shared by every command."""

    config: RunConfig
    config_path: Path | None
    seed_override: int | None
    default_seed: int
    out: Path
    quiet: bool
    json: bool

    def seed_for(self, block: str | None = None) -> int:
        """The --seed flag, then the seed of a config block when a config file was given, then the environment."""
        if self.seed_override is not None:
            return self.seed_override
        if self.config_path is not None and block is not None:
            return getattr(self.config, block).seed
        return self.default_seed

    def emit(self, payload: dict[str, Any], lines: list[str]) -> None:
        """One JSON document with ``--json``, otherwise human-readable lines."""
        if self.json:
            typer.echo(json.dumps(payload, indent=2, sort_keys=True))
        elif not self.quiet:
            for line in lines:
                typer.echo(line)


def _state(ctx: typer.Context) -> CliState:
    return ctx.obj


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.lower().split("x"))
    except ValueError:
        raise ParameterError(f"dims must look like 64x64, got {text!r}") from None
    return dims


def _configure_logging(quiet: bool, level: str) -> None:
    logging.basicConfig(
        level=logging.ERROR if quiet else getattr(logging, level.upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


@app.callback()
def main(
    ctx: typer.Context,
    config: Path | None = typer.Option(None, "--config", "-c", help="TOML run configuration"),
    seed: int | None = typer.Option(None, "--seed", help="Master seed (overrides config and environment)"),
    out: Path | None = typer.Option(None, "--out", "-o", help="Output directory"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Only print errors"),
    json_output: bool = typer.Option(False, "--json", help="Print one JSON document on stdout"),
) -> None:
    """Fractal-texture analysis and wavelet + FD segmentation."""
    settings = get_settings()
    _configure_logging(quiet, settings.log_level)
    run_config = load_run_config(config) if config else RunConfig()
    ctx.obj = CliState(
        config=run_config,
        config_path=config,
        seed_override=seed,
        default_seed=settings.seed,
        out=out or run_config.output_dir or settings.output_dir,
        quiet=quiet,
        json=json_output,
    )


@app.command()
def synth(
    ctx: typer.Context,
    hurst: float = typer.Option(..., "--hurst", "-H", help="Hurst exponent in (0, 1)"),
    dims: str = typer.Option("256x256", "--dims", "-d", help="Grid size, e.g. 8192 or 256x256"),
    normalize: bool = typer.Option(False, "--normalize", help="Zero mean, unit variance"),
    name: str = typer.Option("fbm", "--name", help="Output file name inside --out"),
) -> None:
    """Synthesize a fractional Brownian motion field."""
    state = _state(ctx)
    seed = state.seed_for()
    spec = FbmSpec(hurst, _parse_dims(dims), seed, normalize)
    path = save_volume(synth_fbm(spec), state.out / name)
    state.emit(
        {"path": str(path), "hurst": hurst, "dims": list(spec.dims), "seed": seed},
        [f"✅ Wrote fBm H={hurst} {dims} (seed {seed}) to {path}"],
    )


@app.command(name="hurst")
def hurst_command(
    ctx: typer.Context,
    image: Path = typer.Argument(..., help="VolumeFile to analyse"),
    method: str = typer.Option("scattering", "--method", help="scattering, pooled or increments"),
    family: WaveletFamily = typer.Option(WaveletFamily.DB2, "--wavelet"),
    boundary: Boundary = typer.Option(Boundary.SYMMETRIC, "--boundary"),
    j_min: int | None = typer.Option(None, "--j-min", help="Smallest scale (default 3 for series, 1 otherwise)"),
    j_max: int | None = typer.Option(None, "--j-max", help="Largest scale (default 7 for series, 5 otherwise)"),
    q: float = typer.Option(1.0, "--q", help="Moment order"),
    weighted: bool = typer.Option(False, "--weighted", help="Weight small scales by 2**(-d j)"),
    nonlinearity: Nonlinearity = typer.Option(Nonlinearity.MODULUS, "--nonlinearity"),
    pooling: Pooling = typer.Option(Pooling.MEAN, "--pooling"),
    pool_factor: int = typer.Option(1, "--pool-factor"),
) -> None:
    """Estimate the Hurst exponent and fractal dimension of a volume."""
    state = _state(ctx)
    x = load_volume(image)
    spec = WaveletSpec(family, boundary)
    default_min, default_max = default_hurst_scales(x.ndim)
    scales = (default_min if j_min is None else j_min, default_max if j_max is None else j_max)
    match method:
        case "scattering":
            estimate = estimate_hurst(x, spec, scales, q, weighted)
        case "pooled":
            pool = PoolSpec(nonlinearity, pooling, pool_factor)
            estimate = pooled_hurst(x, spec, scales, pool, q, weighted)
        case "increments":
            if j_min is None and j_max is None:
                estimate = increment_variance_hurst(x)
            else:
                estimate = increment_variance_hurst(x, tuple(2**j for j in range(scales[0] - 1, scales[1])))
        case _:
            raise ParameterError(f"unknown method {method!r}; use scattering, pooled or increments")
    state.emit(
        {"path": str(image), "method": method, **estimate.to_dict()},
        [f"📊 H = {estimate.hurst:.4f} (stderr {estimate.slope_stderr:.4f}), FD = {estimate.fd:.4f}"],
    )


@app.command()
def fdmap(
    ctx: typer.Context,
    image: Path = typer.Argument(..., help="Single-channel VolumeFile"),
    window: int | None = typer.Option(None, "--window", help="Power-of-two window (default from config)"),
    stride: int | None = typer.Option(None, "--stride"),
    mode: str | None = typer.Option(None, "--mode", help="dense or scalar"),
    name: str = typer.Option("fdmap", "--name", help="Output file name inside --out"),
) -> None:
    """Compute a sliding-window fractal-dimension map."""
    state = _state(ctx)
    options = state.config.fd
    x = load_volume(image)
    spec = WaveletSpec(options.wavelet.family, options.wavelet.boundary)
    result = fd_map(
        x,
        window or options.window,
        stride or options.stride,
        spec,
        (options.j_min, options.j_max),
        options.q,
        mode or options.mode,
    )
    path = save_volume(result, state.out / name)
    lines = [f"✅ Wrote FD map (mean {result.data.mean():.4f}) to {path}"]
    if result.attrs.get("warning"):
        lines.append("⚠️  Warning: the image carries no multiscale signal; every cell holds the sentinel FD")
    state.emit({"path": str(path), "mean_fd": float(result.data.mean()), **result.attrs}, lines)


@app.command()
def dataset(
    ctx: typer.Context,
    cases: int | None = typer.Option(None, "--cases", help="Training cases (default from config)"),
    test_cases: int | None = typer.Option(None, "--test-cases", help="Held-out cases (default from config)"),
    root: Path | None = typer.Option(None, "--root", help="Dataset directory (default <out>/dataset)"),
) -> None:
    """Generate the synthetic two-texture segmentation dataset."""
    state = _state(ctx)
    block = state.config.dataset
    background, foreground = block.textures()
    root = root or state.out / block.root
    train_seed, test_seed = derive_seeds(state.seed_for("dataset"), 2)
    n_test = test_cases if test_cases is not None else block.n_test
    splits = {"train": (cases or block.n_cases, train_seed), "test": (n_test, test_seed)}
    written = {}
    for split, (count, seed) in splits.items():
        if count < 1:
            continue
        manifest = make_synthetic_dataset(
            background, foreground, count, root / split, tuple(block.image_size), block.geometry(), seed
        )
        written[split] = len(manifest.cases)
    state.emit(
        {"root": str(root), "cases": written},
        [f"✅ Wrote {count} {split} cases to {root / split}" for split, count in written.items()],
    )


def _load_split(root: Path, split: str, state: CliState, arch: ArchSpec) -> list[Sample]:
    _, cases = load_dataset(root / split)
    return prepare_samples(
        [image for _, image, _ in cases],
        [mask for _, _, mask in cases],
        arch,
        case_ids=[case_id for case_id, _, _ in cases],
        fd_options=state.config.fd.build(),
    )


def _log_payload(log: TrainingLog) -> dict[str, Any]:
    return {"epoch_losses": log.epoch_losses, "steps": log.steps, "test_dice": log.test_dice}


@app.command()
def train(
    ctx: typer.Context,
    data: Path | None = typer.Option(None, "--data", help="Dataset directory with train/ and test/"),
    members: int = typer.Option(1, "--members", help="Ensemble members with derived seeds"),
    epochs: int | None = typer.Option(None, "--epochs", help="Override the configured epoch count"),
) -> None:
    """Train the segmentation network (or a deep ensemble) on a synthetic dataset."""
    state = _state(ctx)
    arch = state.config.arch.build()
    config = state.config.train.build()
    overrides: dict[str, Any] = {"seed": state.seed_for("train")}
    if epochs is not None:
        overrides["epochs"] = epochs
    config = replace(config, **overrides)
    root = data or state.out / state.config.dataset.root

    samples = _load_split(root, "train", state, arch)
    test_samples = _load_split(root, "test", state, arch) if (root / "test").exists() else None
    results = train_ensemble(config, arch, samples, members, test_samples)

    models = []
    for index, (params, log) in enumerate(results):
        stem = "model" if members == 1 else f"model_{index:02d}"
        ckpt = save_checkpoint(params, state.out / f"{stem}.ckpt")
        atomic_write_text(state.out / f"{stem}.log.json", json.dumps(_log_payload(log), indent=2) + "\n")
        models.append({"checkpoint": str(ckpt), **_log_payload(log)})

    lines = []
    for model in models:
        lines.append(f"💾 Saved {model['checkpoint']} (final loss {model['epoch_losses'][-1]:.6f})")
        if model["test_dice"] is not None:
            lines.append(f"   held-out foreground Dice: {model['test_dice']:.4f}")
    state.emit({"models": models}, lines)


@app.command(name="predict")
def predict_command(
    ctx: typer.Context,
    image: Path = typer.Argument(..., help="Image VolumeFile"),
    model: Path = typer.Option(..., "--model", "-m", help="Checkpoint file"),
    normalize: bool = typer.Option(False, "--normalize", help="Normalise over nonzero voxels first"),
    crop: str | None = typer.Option(None, "--crop", help="Centre-crop to these dims, re-embedding the result"),
    brats_labels: bool = typer.Option(False, "--brats-labels", help="Map class indices back to BraTS labels"),
    save_probs: bool = typer.Option(False, "--probs", help="Also write the probability map"),
    name: str = typer.Option("prediction", "--name", help="Output file name inside --out"),
) -> None:
    """Predict a label map with a trained checkpoint."""
    state = _state(ctx)
    params = load_checkpoint(model)
    x = load_volume(image)
    if normalize:
        x = normalize_volume(x)
    if crop:
        x = crop_volume(x, _parse_dims(crop))
    fd = _inference_fd(state, params, x)
    labels = predict(params, x, fd=fd)
    if brats_labels:
        labels = restore_labels(labels)
    if crop:
        labels = embed_volume(labels)
    path = save_volume(labels, state.out / name, dtype="uint8")
    payload: dict[str, Any] = {"path": str(path), "classes": np.unique(labels.data).astype(int).tolist()}
    if save_probs:
        probs, _ = forward(params, x, fd=fd)
        payload["probs"] = str(save_volume(embed_volume(probs) if crop else probs, state.out / f"{name}_probs"))
    state.emit(payload, [f"✅ Wrote labels to {path}"])


def _inference_fd(state: CliState, params: NetworkParams, x: Volume) -> Volume | None:
    """FD input channel computed with the configured ``[fd]`` options, as in training."""
    return fd_channel(x, state.config.fd.build()) if params.arch.fd_channel else None


def _pairs(pred: Path, gt: Path) -> list[tuple[str, Path, Path]]:
    if pred.is_dir() != gt.is_dir():
        raise ParameterError("--pred and --gt must both be files or both be directories")
    if not pred.is_dir():
        return [(pred.with_suffix("").name, pred, gt)]
    pairs = []
    for header in sorted(pred.rglob("*.json")):
        relative = header.relative_to(pred)
        if relative.name == "manifest.json":
            continue
        target = gt / relative
        if not target.exists():
            raise ParameterError(f"no ground truth for {relative} under {gt}")
        pairs.append((str(relative.with_suffix("")), header, target))
    if not pairs:
        raise ParameterError(f"no VolumeFiles found under {pred}")
    return pairs


@app.command()
def evaluate(
    ctx: typer.Context,
    pred: Path = typer.Option(..., "--pred", "-p", help="Predicted labels (file or directory)"),
    gt: Path = typer.Option(..., "--gt", "-g", help="Ground-truth labels (file or directory)"),
    recon: Path | None = typer.Option(None, "--recon", help="Reconstruction for NMSE (single case)"),
    reference: Path | None = typer.Option(None, "--reference", help="Reference for NMSE (single case)"),
    name: str = typer.Option("report", "--name", help="Report file name inside --out"),
) -> None:
    """Score predictions per region (WT, TC, ET) and summarise over cases."""
    state = _state(ctx)
    pairs = _pairs(pred, gt)
    if (recon or reference) and len(pairs) != 1:
        raise ParameterError("--recon/--reference apply to single-case evaluation")
    reports = []
    for case_id, pred_path, gt_path in pairs:
        truth = load_volume(gt_path)
        reports.append(
            region_report(
                load_volume(pred_path),
                truth,
                truth.spacing,
                case_id,
                load_volume(recon) if recon else None,
                load_volume(reference) if reference else None,
            )
        )
    report = summarize(reports)
    path = save_report(report, state.out / f"{name}.json")
    if state.json:
        typer.echo(report_json(report), nl=False)
    elif not state.quiet:
        typer.echo(render_table(report))
        typer.echo(f"\n💾 Saved report to {path}")


@app.command()
def uq(
    ctx: typer.Context,
    image: Path = typer.Argument(..., help="Image VolumeFile"),
    model: list[Path] = typer.Option(..., "--model", "-m", help="Checkpoint(s); several for an ensemble"),
    method: UqMethod = typer.Option(UqMethod.MCDO, "--method"),
    samples: int = typer.Option(16, "--samples", "-n", help="Stochastic forwards for mcdo / combined"),
    transforms: str | None = typer.Option(None, "--transforms", help="Comma-separated TTA transforms"),
    name: str = typer.Option("uq", "--name", help="Output file prefix inside --out"),
) -> None:
    """Mean probability and per-pixel variance from MC dropout, ensembles or TTA."""
    state = _state(ctx)
    members = [load_checkpoint(path) for path in model]
    x = load_volume(image)
    names = [t.strip() for t in transforms.split(",")] if transforms else None
    if method != UqMethod.ENSEMBLE and len(members) != 1:
        raise ParameterError(f"{method} takes exactly one --model")
    fd = _inference_fd(state, members[0], x)
    match method:
        case UqMethod.MCDO:
            result = mc_dropout_predict(members[0], x, samples, state.seed_for(), fd=fd)
        case UqMethod.ENSEMBLE:
            result = ensemble_predict(members, x, fd=fd)
        case UqMethod.TTA:
            result = tta_predict(members[0], x, names, fd=fd)
        case UqMethod.COMBINED:
            result = combined_predict(members[0], x, samples, names, state.seed_for(), fd=fd)
    mean_path = save_volume(result.mean_prob, state.out / f"{name}_mean")
    variance_path = save_volume(result.variance, state.out / f"{name}_variance")
    entropy_path = save_volume(predictive_entropy(result.mean_prob), state.out / f"{name}_entropy")
    summary = result.summary()
    state.emit(
        {**summary, "mean": str(mean_path), "variance": str(variance_path), "entropy": str(entropy_path)},
        [
            f"📊 {method}: {result.n_samples} samples, mean variance {summary['mean_variance']:.6g}, "
            f"mean entropy {summary['mean_entropy']:.6g}",
            f"✅ Wrote {mean_path}, {variance_path} and {entropy_path}",
        ],
    )


def dispatch(argv: list[str] | None = None) -> int:
    """Run one command and return its exit code.

    0 on success, 1 on runtime and data errors, 2 on usage errors. Expected
    errors print one ``Error: ...`` line on stderr instead of a traceback.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        with redirect_stdout(sys.stderr):
            _main(["--help"])
        return 2
    try:
        return _main(argv)
    except FractexError as exc:
        typer.echo(f"❌ Error: {exc}", err=True)
        return 1


def _main(argv: list[str]) -> int:
    # standalone mode reports usage errors itself and ends every run with SystemExit
    command = typer.main.get_command(app)
    try:
        command.main(args=argv, prog_name="fractex", standalone_mode=True)
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0


def run() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    run()
