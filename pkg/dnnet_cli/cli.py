"""
dnnet command-line interface
"""

from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import typer
from rich.console import Console
from rich.markdown import Markdown
from rich.panel import Panel

from . import __description__, __version__
from .commands import GridCommands, SliceCommands, TrainCommands, VerifyCommands
from .core.config import ArchDescriptor, DataConfig, LambdaConfig, RunConfig, TrainConfig, default_output_root
from .core.errors import ConfigError, DNNetError
from .slicing.selector import Budget
from .utils.helpers import display_config_info, display_error, display_success, display_warning
from .utils.logging import get_logger, setup_logging

app = typer.Typer(
    name="dnnet",
    help="Train doubly nested networks, slice them and pick slices under budgets",
    add_completion=False,
)

console = Console()
logger = get_logger(__name__)


@contextmanager
def handle_errors() -> Iterator[None]:
    """Print library errors in red and exit with their code"""
    try:
        yield
    except DNNetError as e:
        logger.debug("Command failed", exc_info=True)
        display_error(str(e))
        raise typer.Exit(code=e.exit_code)


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging with timestamps"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Only warnings and errors"),
    log_file: Optional[str] = typer.Option(None, "--log-file", help="Also write the log to this file"),
):
    """dnnet: doubly nested network toolkit"""
    setup_logging(verbose, quiet, log_file)


def _parse_hw(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        values = [int(v) for v in text.lower().replace("x", ",").split(",")]
    except ValueError:
        values = []
    if len(values) != 2 or min(values) < 1:
        raise ConfigError(f"Invalid input size '{text}' (expected H,W or HxW)")
    return values


def build_run_config(
    config_file: Optional[str] = None,
    arch: Optional[str] = None,
    data: Optional[str] = None,
    steps: Optional[int] = None,
    batch: Optional[int] = None,
    lr: Optional[float] = None,
    momentum: Optional[float] = None,
    decay: Optional[str] = None,
    seed: Optional[int] = None,
    lambda_: Optional[str] = None,
    gamma: Optional[float] = None,
    precision: Optional[str] = None,
    weight_decay: Optional[float] = None,
    eval_every: Optional[int] = None,
    train_count: Optional[int] = None,
    test_count: Optional[int] = None,
    noise: Optional[float] = None,
    flip: Optional[bool] = None,
    crop_pad: Optional[int] = None,
    out: Optional[str] = None,
) -> RunConfig:
    """Config file (or defaults) with command-line flags layered on top"""
    config = RunConfig.load(config_file)
    if arch is not None:
        config.arch = ArchDescriptor.resolve(arch)
    if data is not None:
        config.data.source = data

    train: TrainConfig = config.train
    for name, value in (("steps", steps), ("batch_size", batch), ("learning_rate", lr),
                        ("momentum", momentum), ("precision", precision),
                        ("weight_decay", weight_decay), ("eval_every", eval_every)):
        if value is not None:
            setattr(train, name, value)
    if decay is not None:
        train.decay = TrainConfig.parse_decay(decay)
    if seed is not None:
        train.seed = seed
        config.arch.seed = seed

    for name, value in (("train_count", train_count), ("test_count", test_count),
                        ("noise_sigma", noise), ("flip", flip), ("crop_pad", crop_pad)):
        if value is not None:
            setattr(config.data, name, value)

    if lambda_ is not None:
        config.weights = LambdaConfig.parse(lambda_, gamma if gamma is not None else config.weights.gamma)
    elif gamma is not None:
        config.weights.gamma = gamma
    if out is not None:
        config.output_dir = out
    return config.resolve()


def _data_config_near(model_path: str, data: Optional[str], test_count: Optional[int],
                      noise: Optional[float], data_seed: Optional[int]) -> DataConfig:
    """Data section of the resolved config saved next to the model, with overrides"""
    echoed = Path(model_path).expanduser().parent / "resolved_config.yaml"
    config = RunConfig.load(echoed).data if echoed.exists() else DataConfig()
    if data is not None:
        config.source = data
    if test_count is not None:
        config.test_count = test_count
    if noise is not None:
        config.noise_sigma = noise
    if data_seed is not None:
        config.seed = data_seed
    return config.validate()


@app.command()
def train(
    config_file: Optional[str] = typer.Option(None, "--config", "-c", help="YAML run configuration"),
    arch: Optional[str] = typer.Option(None, "--arch", help="Architecture preset (toy, toy4, resnet32) or YAML file"),
    data: Optional[str] = typer.Option(None, "--data", help="synth or cifar10:DIR"),
    steps: Optional[int] = typer.Option(None, "--steps", help="SGD steps"),
    batch: Optional[int] = typer.Option(None, "--batch", help="Mini-batch size"),
    lr: Optional[float] = typer.Option(None, "--lr", help="Initial learning rate"),
    momentum: Optional[float] = typer.Option(None, "--momentum", help="SGD momentum"),
    decay: Optional[str] = typer.Option(None, "--decay", help="Learning-rate schedule STEP:FACTOR,..."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for initialization and batching"),
    lambda_: Optional[str] = typer.Option(
        None, "--lambda", help="flat | descend | ascend | custom:FILE | pick:L,C,K[,BASE]"
    ),
    gamma: Optional[float] = typer.Option(None, "--gamma", help="Base of the descend/ascend weights (> 1)"),
    precision: Optional[str] = typer.Option(None, "--precision", help="float32 or float64"),
    weight_decay: Optional[float] = typer.Option(None, "--weight-decay", help="L2 penalty on unmasked weights"),
    eval_every: Optional[int] = typer.Option(None, "--eval-every", help="Evaluate every N steps (0 = end only)"),
    train_count: Optional[int] = typer.Option(None, "--train-count", help="Synthetic training images"),
    test_count: Optional[int] = typer.Option(None, "--test-count", help="Synthetic test images"),
    noise: Optional[float] = typer.Option(None, "--noise", help="Synthetic noise sigma"),
    flip: Optional[bool] = typer.Option(None, "--flip/--no-flip", help="Random horizontal flips"),
    crop_pad: Optional[int] = typer.Option(None, "--crop-pad", help="Pad-and-crop augmentation margin"),
    out: Optional[str] = typer.Option(
        None, "--out", "-o", help="Output directory (default: $DNNET_OUTPUT_ROOT or ./runs)"
    ),
    progress: bool = typer.Option(True, "--progress/--no-progress", help="Show a progress bar"),
):
    """Train every head of a nested model and save model, metrics and resolved config"""
    with handle_errors():
        config = build_run_config(config_file, arch, data, steps, batch, lr, momentum, decay, seed, lambda_,
                                  gamma, precision, weight_decay, eval_every, train_count, test_count, noise,
                                  flip, crop_pad, out)
        TrainCommands(config, console).run(show_progress=progress)


@app.command()
def grid(
    model_path: str = typer.Argument(..., help="Full model container"),
    data: Optional[str] = typer.Option(None, "--data", help="synth or cifar10:DIR"),
    test_count: Optional[int] = typer.Option(None, "--test-count", help="Synthetic test images"),
    noise: Optional[float] = typer.Option(None, "--noise", help="Synthetic noise sigma"),
    data_seed: Optional[int] = typer.Option(None, "--data-seed", help="Synthetic data seed"),
    baseline: Optional[str] = typer.Option(None, "--baseline", help="Baseline grid CSV for a cell-wise delta"),
    curve: bool = typer.Option(False, "--curve", help="Also write width_curve.csv"),
    workers: int = typer.Option(1, "--workers", help="Evaluation threads"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory (default: next to the model)"),
):
    """Test accuracy of every (d, w) head as an L x C CSV"""
    with handle_errors():
        data_config = _data_config_near(model_path, data, test_count, noise, data_seed)
        target = out or str(Path(model_path).expanduser().parent)
        GridCommands(console).run(model_path, data_config, target, baseline, curve, workers)


@app.command("slice")
def slice_cmd(
    model_path: str = typer.Argument(..., help="Full model container"),
    d: int = typer.Option(..., "--d", help="Layer groups to keep"),
    w: int = typer.Option(..., "--w", help="Channel groups to keep"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Sliced model file"),
):
    """Extract slice (d, w) as a standalone model"""
    with handle_errors():
        target = out or str(Path(model_path).expanduser().parent / f"slice_d{d}_w{w}.dnnt")
        SliceCommands(console).extract(model_path, d, w, target)


@app.command()
def cost(
    source: str = typer.Argument(..., help="Model container, architecture preset or YAML file"),
    hw: Optional[str] = typer.Option(None, "--hw", help="Reference input size H,W (default: descriptor input_hw)"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Cost CSV (default: <output root>/cost.csv)"),
):
    """Parameters, MACs and peak activation of every slice"""
    with handle_errors():
        target = out or str(default_output_root() / "cost.csv")
        SliceCommands(console).costs(source, target, _parse_hw(hw))


@app.command()
def select(
    cost_csv: str = typer.Argument(..., help="Cost table written by `dnnet cost`"),
    score_csv: str = typer.Argument(..., help="L x C score table, e.g. accuracy_grid.csv"),
    max_macs: Optional[int] = typer.Option(None, "--max-macs", help="MAC budget per sample"),
    max_params: Optional[int] = typer.Option(None, "--max-params", help="Parameter budget"),
    max_mem: Optional[int] = typer.Option(None, "--max-mem", help="Peak activation budget (scalars per sample)"),
):
    """Best-scoring slice within the budget (exit code 4 when none fits)"""
    with handle_errors():
        choice = SliceCommands(console).select(cost_csv, score_csv, Budget(max_macs, max_params, max_mem))
        console.print(f"selected d={choice.d} w={choice.w}")


@app.command()
def frontier(
    cost_csv: str = typer.Argument(..., help="Cost table written by `dnnet cost`"),
    score_csv: str = typer.Argument(..., help="L x C score table"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Frontier CSV"),
):
    """Pareto-optimal slices of the full grid against width-only and depth-only slicing"""
    with handle_errors():
        SliceCommands(console).frontier(cost_csv, score_csv, out)


@app.command()
def verify(
    model_path: Optional[str] = typer.Argument(None, help="Full model container (omit with --fresh)"),
    fresh: Optional[str] = typer.Option(None, "--fresh", help="Verify a freshly initialized preset instead"),
    inputs: int = typer.Option(100, "--inputs", help="Random probe inputs for the equivalence sweep"),
    grad_samples: int = typer.Option(64, "--grad-samples", help="Parameters sampled by the gradient check"),
    draws: int = typer.Option(1000, "--draws", help="Random selector instances"),
    seed: int = typer.Option(0, "--seed", help="Seed for probes and samples"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Write the report as CSV"),
):
    """Run the invariant suite; exit code 5 if any check fails"""
    with handle_errors():
        if model_path is None and fresh is None:
            raise ConfigError("Give a model file or --fresh PRESET")
        report = VerifyCommands(console).run(model_path, fresh, inputs, grad_samples, draws, seed)
        if out:
            path = Path(out).expanduser()
            path.parent.mkdir(parents=True, exist_ok=True)
            report.to_frame().to_csv(path, index=False)
        report.raise_for_failures()
        display_success(f"All {len(report.checks)} checks passed")


@app.command()
def configure(
    show: bool = typer.Option(False, "--show", help="Show the resolved configuration"),
    config_file: Optional[str] = typer.Option(None, "--config", "-c", help="YAML run configuration"),
    arch: Optional[str] = typer.Option(None, "--arch", help="Architecture preset or YAML file"),
    write: Optional[str] = typer.Option(None, "--write", help="Save the resolved configuration to this file"),
):
    """Inspect or write a run configuration"""
    with handle_errors():
        config = build_run_config(config_file, arch)
        if show:
            display_config_info(config.to_dict())
        if write:
            path = config.save(write)
            display_success(f"Configuration written to {path}")
        if not show and not write:
            display_warning("Use --show or --write")


@app.command()
def version():
    """Show version information"""
    version_text = f"""
**dnnet-cli**
Version: {__version__}

{__description__}

**Commands:** train, grid, slice, cost, select, frontier, verify, configure
"""
    console.print(Panel(Markdown(version_text), title="Version Information", border_style="magenta"))


if __name__ == "__main__":
    app()
