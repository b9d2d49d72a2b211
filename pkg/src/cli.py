"""
Command Line Interface for the RDFC autoencoder

Provides one command per pipeline stage plus the analysis commands
(oracle, region, ratio, heatmap).
"""

import functools
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click
from rich.console import Console

from src import __version__
from src.binning import induced_pmf, load_bins
from src.datagen import load_dataset, samples_from_dataset
from src.errors import ConfigError, RDFCError, StageError, ValidationError
from src.logging_config import setup_logging
from src.neuralnet import load_params
from src.pipeline import ExperimentConfig, ExperimentRunner, emit_heatmap, get_profile, stage
from src.pipeline.config import config_keys, format_value, key_help, load_profiles, normalize_key, parse_value
from src.pipeline.runner import history_from_csv
from src.probability import (
    RateTriple,
    check_rate_triple,
    conditional_entropy_y_given_x,
    corner_points,
    coverage_ratio,
    coverage_table,
    dsbs_target,
    format_percent,
    load_pmf_csv,
    mutual_information,
    tvd,
    wyner_common_information,
)

logger = logging.getLogger(__name__)

console = Console(soft_wrap=True)
err_console = Console(stderr=True, soft_wrap=True)

# Stage whose stamp covers each artifact a command reads
PRODUCED_BY = {
    "samples": "generate",
    "qhat_train": "generate",
    "bins": "bins",
    "train": "attach",
    "model": "train",
    "history": "train",
}


def parse_config(text: str, overrides: Optional[Dict[str, Any]] = None, profile: Optional[str] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from config file text and flag overrides.

    Args:
        text: `key=value` lines; `#` starts a comment
        overrides: Flag values (None entries are ignored); they win over the file
        profile: Optional shipped profile applied below the file

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: unknown key, unparsable value or missing n
    """
    values: Dict[str, Any] = get_profile(profile) if profile else {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {number} is not key=value: {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = normalize_key(key)
        values[key] = parse_value(key, value)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = normalize_key(key)
        values[key] = parse_value(key, value)
    return ExperimentConfig(**values)


def config_options(func):
    """Add --config, --profile and one option per config key."""
    defaults = ExperimentConfig.__dataclass_fields__
    for key in reversed(config_keys()):
        shown = "required" if key == "n" else format_value(defaults[key].default)
        func = click.option(
            f"--{key.replace('_', '-')}", key, default=None, metavar="VALUE",
            help=f"{key_help(key)} [default: {shown}]",
        )(func)
    func = click.option('--profile', type=click.Choice(sorted(load_profiles())), default=None, metavar='NAME',
                        help='Shipped profile applied before the config file')(func)
    func = click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
                        help='Config file of key=value lines')(func)
    return func


def load_config(config_path: Optional[str], profile: Optional[str], overrides: Dict[str, Any]) -> ExperimentConfig:
    try:
        text = Path(config_path).read_text(encoding="utf-8") if config_path else ""
    except UnicodeDecodeError as e:
        raise ConfigError(f"config file {config_path} is not UTF-8 text: {e.reason} at byte {e.start}") from None
    return parse_config(text, overrides, profile=profile)


def exit_code(error: BaseException) -> int:
    """1 for invalid input, 2 for runtime failures."""
    if isinstance(error, StageError):
        return 1 if error.is_validation else 2
    if isinstance(error, ValidationError):
        return 1
    return 2


def reports_errors(func):
    """Print pipeline errors on stderr and exit with their code."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except RDFCError as e:
            err_console.print(f"error: {e}", style="bold red", markup=False)
            sys.exit(exit_code(e))
    return wrapper


def _require(runner: ExperimentRunner, artifact: str, command: str) -> Path:
    path = runner.path(artifact)
    if not path.exists():
        raise ValidationError(f"{path} not found; run '{command}' first")
    stale = runner.stale_keys(PRODUCED_BY[artifact])
    if stale:
        raise ValidationError(f"{path} was produced with different {', '.join(stale)}; run '{command}' first")
    return path


@click.group()
@click.version_option(version=__version__)
@click.option('--log-level', default='INFO', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR']),
              help='Terminal log level')
def cli(log_level):
    """RDFC autoencoder - distributed channel synthesis with common and local randomness."""
    setup_logging(log_level)


@cli.command()
@config_options
@reports_errors
def gen(config_path, profile, **keys):
    """Sample the channel and estimate Q from the training samples."""
    cfg = load_config(config_path, profile, keys)
    runner = ExperimentRunner(cfg)
    with stage("generate"):
        samples, _ = runner.generate()
    console.print(f"[green]✓ Sampled {len(samples)} channel pairs[/green]")
    console.print(f"[blue]Saved to: {runner.path('samples')}, {runner.path('qhat_train')}[/blue]")


@cli.command()
@config_options
@reports_errors
def bins(config_path, profile, **keys):
    """Build output, K- and L-bins from the training estimate."""
    cfg = load_config(config_path, profile, keys)
    runner = ExperimentRunner(cfg)
    with stage("bins"):
        qhat = load_pmf_csv(_require(runner, "qhat_train", "gen"))
        runner.build_bins(qhat)
    console.print(f"[green]✓ Built bins with beta={cfg.bin_width}[/green]")
    console.print(f"  • empty K-ranges: {runner.counts['empty_k_bins']}")
    console.print(f"  • empty L-ranges: {runner.counts['empty_l_bins']}")


@cli.command()
@config_options
@reports_errors
def attach(config_path, profile, **keys):
    """Attach common and local randomness to the training samples."""
    cfg = load_config(config_path, profile, keys)
    runner = ExperimentRunner(cfg)
    with stage("attach"):
        samples = samples_from_dataset(load_dataset(_require(runner, "samples", "gen")))
        binning = load_bins(_require(runner, "bins", "bins"))
        runner.attach(samples, binning)
    console.print(f"[green]✓ Training set with {runner.counts['train_records']} records[/green]")
    console.print(f"  • dropped (empty bins): {runner.counts['dropped_records']}")


@cli.command()
@config_options
@reports_errors
def train(config_path, profile, **keys):
    """Train the autoencoder on the training set."""
    cfg = load_config(config_path, profile, keys)
    runner = ExperimentRunner(cfg)
    with stage("train"):
        train_set = load_dataset(_require(runner, "train", "attach"))
        _, history = runner.train(train_set)
    console.print(f"[green]✓ Trained {len(history)} epochs, final loss {history.losses[-1]:.6f}[/green]")
    console.print(f"[blue]Model saved to: {runner.path('model')}[/blue]")


@cli.command(name="eval")
@config_options
@reports_errors
def eval_command(config_path, profile, **keys):
    """Evaluate the trained model and write the report."""
    cfg = load_config(config_path, profile, keys)
    runner = ExperimentRunner(cfg, resume=True)
    _require(runner, "model", "train")
    with stage("evaluate"):
        samples, qhat = runner.generate()
        runner.attach(samples, runner.build_bins(qhat))
        params = load_params(runner.path("model"))
        report = runner.evaluate(params, history_from_csv(_require(runner, "history", "train")))
    for name, value in report.summary().items():
        console.print(f"  • {name}: {value}")
    console.print(f"[blue]Report saved to: {runner.path('report')}[/blue]")


@cli.command()
@config_options
@reports_errors
def oracle(config_path, profile, **keys):
    """Ideal-decoder baseline: exact PMF induced by the bins."""
    cfg = load_config(config_path, profile, keys)
    runner = ExperimentRunner(cfg, resume=True)
    with stage("oracle"):
        _, qhat = runner.generate()
        binning = runner.build_bins(qhat)
        induced = induced_pmf(binning, qhat.marginal_x())
        target = runner.target()
        emit_heatmap(induced, runner.output_dir / "heatmap_oracle")
    bound = induced.size * (1.0 / binning.k_bins.size + 1.0 / binning.l_bins.size)
    console.print("[bold green]Ideal decoder[/bold green]")
    console.print(f"  • TVD to estimate: {tvd(induced, qhat):.6f}")
    console.print(f"  • TVD to target: {tvd(induced, target):.6f}")
    console.print(f"  • bound |Y|(1/|K| + 1/|L|): {bound:.6f}")


@cli.command()
@config_options
@click.option('--triple', default=None, metavar='R,R0,RL', help='Rate triple to check against the WCI corner')
@reports_errors
def region(config_path, profile, triple, **keys):
    """Information measures and corner points of the rate region."""
    cfg = load_config(config_path, profile, keys)
    runner = ExperimentRunner(cfg)
    joint = runner.target()
    console.print(f"[bold green]Rate region (n={cfg.n})[/bold green]")
    console.print(f"  • block I(X;Y)={mutual_information(joint):.4f}")
    console.print(f"  • per-symbol I(X;Y)={mutual_information(joint, per_symbol=True):.4f}")
    console.print(f"  • per-symbol H(Y|X)={conditional_entropy_y_given_x(joint, per_symbol=True):.4f}")
    if cfg.target_csv:
        console.print("[yellow]Per-symbol region analysis needs a BSC target; skipping WCI[/yellow]")
        return

    with stage("region"):
        wci = wyner_common_information(dsbs_target(cfg.p), seed=cfg.seed)
    console.print(f"  • per-symbol WCI={wci.value:.4f}")
    for corner in corner_points(dsbs_target(cfg.p), wci):
        t = corner.triple
        console.print(f"  • corner {corner.label}: R={t.r:.4f} R0={t.r0:.4f} RL={t.rl:.4f}")
    if triple:
        try:
            r, r0, rl = (float(v) for v in triple.split(","))
        except ValueError:
            raise ValidationError(f"--triple expects R,R0,RL, got {triple!r}") from None
        check = check_rate_triple(wci.certificate, RateTriple(r=r, r0=r0, rl=rl))
        if check.accepted:
            console.print(f"[green]✓ ({r}, {r0}, {rl}) is achievable through the WCI corner[/green]")
        else:
            console.print(f"[red]✗ ({r}, {r0}, {rl}) violates {', '.join(check.violated)}[/red]")


@cli.command()
@config_options
@click.option('--table', is_flag=True, help='List the coverage of the full-size experiment grid')
@reports_errors
def ratio(config_path, profile, table, **keys):
    """Training samples relative to all (x, y, k, l) combinations."""
    if table:
        console.print("n  nR0  nRL  T       N_s/T")
        for n, nr0, nrl, cov in coverage_table():
            console.print(f"{n:<2} {nr0:<4} {nrl:<4} 2^{int(cov.log2_total):<5} {format_percent(cov.percent)}")
        return
    cfg = load_config(config_path, profile, keys)
    cov = coverage_ratio(cfg.n, cfg.nr0, cfg.nrl, cfg.ns)
    console.print(f"T=2^{int(cov.log2_total)} N_s/T={format_percent(cov.percent)}")


@cli.command()
@click.option('--pmf', 'pmf_path', required=True, type=click.Path(exists=True, dir_okay=False), help='PMF CSV (x,y,prob)')
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False), help='Output path (suffix replaced)')
@click.option('--png', is_flag=True, help='Also render a PNG')
@reports_errors
def heatmap(pmf_path, out_path, png):
    """Render a PMF CSV as PGM (and PNG) heatmap."""
    written = emit_heatmap(load_pmf_csv(pmf_path), out_path, png=png)
    for path in written:
        console.print(f"[blue]Wrote: {path}[/blue]")


@cli.command()
@config_options
@click.option('--resume', is_flag=True, help='Reuse artifacts already in the output directory')
@reports_errors
def run(config_path, profile, resume, **keys):
    """Run the complete pipeline."""
    cfg = load_config(config_path, profile, keys)
    console.print("[bold green]Running RDFC pipeline...[/bold green]")
    report = ExperimentRunner(cfg, resume=resume).run()
    console.print("[blue]Results:[/blue]")
    for name, value in report.summary().items():
        console.print(f"  • {name}: {value}")
    console.print(f"[blue]Outputs saved to: {cfg.output_dir}[/blue]")


def main(args=None):
    """Main entry point."""
    try:
        rv = cli.main(args=args, prog_name="rdfc", standalone_mode=False)
    except click.exceptions.Abort:
        err_console.print("aborted", style="bold red")
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    except Exception as e:
        err_console.print(f"unexpected error: {e}", style="bold red", markup=False)
        sys.exit(2)
    sys.exit(rv if isinstance(rv, int) else 0)


if __name__ == "__main__":
    main()
