"""
End-to-end experiment orchestration.

Stages and the artifacts they leave in the output directory:

    generate  samples.rdfc, qhat_train.csv
    bins      bins.rdfb
    attach    train.rdfc
    train     model.rdfm, history.csv
    evaluate  test.rdfc, qhat_test.csv, heatmap_*.csv/.pgm, report.txt

With resume enabled a stage whose artifacts already exist loads them instead
of recomputing, provided the keys that stage depends on still match the
stamp written next to them in stamps/<stage>.json. The final report is the
same either way.
"""

import json
import logging
from contextlib import contextmanager
from io import StringIO
from pathlib import Path
from typing import Dict, Iterator, List, Tuple

import numpy as np
import pandas as pd
from rich.console import Console

from src.binning import Binning, BinningConfig, build_bins, load_bins, save_bins
from src.datagen import (
    BSCChannel,
    ChannelSamples,
    Dataset,
    TabularChannel,
    attach_randomness,
    load_dataset,
    make_test_set,
    raw_samples_dataset,
    sample_channel,
    samples_from_dataset,
    save_dataset,
)
from src.errors import BudgetError, StageError, ValidationError
from src.logging_config import add_json_file_handler, remove_json_file_handler
from src.neuralnet import NetworkParams, Trainer, TrainingHistory, build_rdfc_ae, load_params, save_params
from src.pipeline.config import ExperimentConfig
from src.pipeline.evaluation import emit_heatmap, evaluate, exact_synth_pmf
from src.pipeline.report import EvalReport, save_report
from src.probability import JointPmf, bsc_joint, load_pmf_csv, save_pmf_csv, tvd
from src.storage import atomic_write_text

logger = logging.getLogger(__name__)
console = Console()

ARTIFACTS = {
    "samples": "samples.rdfc",
    "qhat_train": "qhat_train.csv",
    "bins": "bins.rdfb",
    "train": "train.rdfc",
    "model": "model.rdfm",
    "history": "history.csv",
    "test": "test.rdfc",
    "qhat_test": "qhat_test.csv",
    "report": "report.txt",
    "log": "run.log",
}

# Config keys each stage's artifacts depend on, beyond those of its upstream stages
STAGE_KEYS = {
    "generate": ("n", "p", "ns", "seed", "shard_size", "target_csv"),
    "bins": ("nr0", "nrl", "beta", "allow_empty_k", "allow_empty_l"),
    "attach": ("on_empty_bin",),
    "train": (
        "nr", "epochs", "batch", "lr", "patience", "min_delta", "plateau_factor", "min_lr",
        "commitment_beta", "encoder_activation", "encoder_depth", "decoder_depth", "float32",
    ),
    "test": ("n", "p", "nr0", "nrl", "ns", "test_count", "seed", "shard_size", "target_csv"),
}

UPSTREAM = {
    "generate": (),
    "bins": ("generate",),
    "attach": ("generate", "bins"),
    "train": ("generate", "bins", "attach"),
    "test": (),
}


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise any failure inside the block as a StageError naming the stage."""
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise StageError(name, e) from e


def history_to_csv(history: TrainingHistory) -> str:
    frame = pd.DataFrame({
        "epoch": np.arange(1, len(history) + 1),
        "loss": history.losses,
        "lr": history.lr_trace,
        "vq_error": history.vq_errors,
    })
    buffer = StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g", lineterminator="\n")
    return buffer.getvalue()


def history_from_csv(path: Path) -> TrainingHistory:
    frame = pd.read_csv(path, float_precision="round_trip")
    return TrainingHistory(
        losses=[float(v) for v in frame["loss"]],
        lr_trace=[float(v) for v in frame["lr"]],
        vq_errors=[float(v) for v in frame["vq_error"]],
    )


class ExperimentRunner:
    """Runs the pipeline stages for one ExperimentConfig in its output directory."""

    def __init__(self, config: ExperimentConfig, resume: bool = False):
        """
        Initialize the runner.

        Args:
            config: Experiment configuration
            resume: Reuse artifacts already present in the output directory
        """
        self.config = config
        self.resume = resume
        self.output_dir = Path(config.output_dir)
        self.counts: Dict[str, int] = {}

    def path(self, artifact: str) -> Path:
        return self.output_dir / ARTIFACTS[artifact]

    def stamp_path(self, stage_name: str) -> Path:
        return self.output_dir / "stamps" / f"{stage_name}.json"

    def stamp(self, stage_name: str) -> Dict[str, str]:
        """Formatted values of every key the stage's artifacts depend on."""
        echo = self.config.echo()
        keys = [k for s in UPSTREAM[stage_name] + (stage_name,) for k in STAGE_KEYS[s]]
        return {k: echo[k] for k in keys}

    def _write_stamp(self, stage_name: str) -> None:
        atomic_write_text(self.stamp_path(stage_name), json.dumps(self.stamp(stage_name), indent=2, sort_keys=True))

    def stale_keys(self, stage_name: str) -> List[str]:
        """
        Keys whose current value differs from the stage's stored stamp.

        A missing or unreadable stamp reports every key as stale.
        """
        current = self.stamp(stage_name)
        try:
            stored = json.loads(self.stamp_path(stage_name).read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return sorted(current)
        if not isinstance(stored, dict):
            return sorted(current)
        return sorted(k for k in set(current) | set(stored) if stored.get(k) != current.get(k))

    def is_current(self, stage_name: str, *artifacts: str) -> bool:
        """True when the artifacts exist and were produced under the current config."""
        if not all(self.path(a).exists() for a in artifacts):
            return False
        stale = self.stale_keys(stage_name)
        if stale:
            logger.warning(f"Artifacts of stage '{stage_name}' are stale (changed keys: {', '.join(stale)})")
        return not stale

    def _reusable(self, stage_name: str, *artifacts: str) -> bool:
        return self.resume and self.is_current(stage_name, *artifacts)

    def channel(self):
        """BSC(p), or the tabular target from target_csv."""
        cfg = self.config
        if cfg.target_csv:
            joint = load_pmf_csv(cfg.target_csv)
            if joint.n != cfg.n:
                raise ValidationError(f"target CSV has n={joint.n} but the config says n={cfg.n}")
            return TabularChannel(joint)
        return BSCChannel(cfg.n, cfg.p)

    def target(self) -> JointPmf:
        cfg = self.config
        if cfg.target_csv:
            return self.channel().target()
        return bsc_joint(cfg.n, cfg.p)

    def generate(self) -> Tuple[ChannelSamples, JointPmf]:
        """Training samples from the channel and their relative frequency estimate."""
        cfg = self.config
        if self._reusable("generate", "samples", "qhat_train"):
            logger.info("Reusing training samples and estimate")
            return samples_from_dataset(load_dataset(self.path("samples"))), load_pmf_csv(self.path("qhat_train"))
        samples = sample_channel(
            self.channel(), cfg.ns, cfg.seed, shard_size=cfg.shard_size, n_jobs=cfg.n_jobs
        )
        stored = raw_samples_dataset(samples, cfg.seed)
        save_dataset(stored, self.path("samples"))
        save_pmf_csv(stored.joint(), self.path("qhat_train"))
        self._write_stamp("generate")
        return samples, load_pmf_csv(self.path("qhat_train"))

    def build_bins(self, qhat: JointPmf) -> Binning:
        cfg = self.config
        if self._reusable("bins", "bins"):
            logger.info("Reusing bins")
            bins = load_bins(self.path("bins"))
        else:
            bin_cfg = BinningConfig.from_rates(
                cfg.bin_width, cfg.nr0, cfg.nrl, allow_empty_k=cfg.allow_empty_k, allow_empty_l=cfg.allow_empty_l
            )
            bins = build_bins(qhat.conditional(), bin_cfg)
            save_bins(bins, self.path("bins"))
            self._write_stamp("bins")
        self.counts["empty_k_bins"] = bins.k_bins.empty_count()
        self.counts["empty_l_bins"] = bins.l_bins.empty_count()
        return bins

    def attach(self, samples: ChannelSamples, bins: Binning) -> Dataset:
        cfg = self.config
        if self._reusable("attach", "train"):
            logger.info("Reusing training set")
            train_set = load_dataset(self.path("train"))
        else:
            train_set = attach_randomness(samples, bins, cfg.seed, on_empty=cfg.on_empty_bin)
            save_dataset(train_set, self.path("train"))
            self._write_stamp("attach")
        self.counts["train_records"] = len(train_set)
        self.counts["dropped_records"] = len(samples) - len(train_set)
        return train_set

    def train(self, train_set: Dataset) -> Tuple[NetworkParams, TrainingHistory]:
        cfg = self.config
        if self._reusable("train", "model", "history"):
            logger.info("Reusing trained model")
            return load_params(self.path("model")), history_from_csv(self.path("history"))
        params = build_rdfc_ae(
            cfg.n, cfg.nr0, cfg.nrl, cfg.seed, nr=cfg.index_bits, encoder_activation=cfg.encoder_activation,
            encoder_depth=cfg.encoder_depth, decoder_depth=cfg.decoder_depth,
            dtype=np.float32 if cfg.float32 else np.float64,
        )
        trainer = Trainer(params, {
            'epochs': cfg.epochs,
            'batch_size': cfg.batch,
            'lr': cfg.lr,
            'seed': cfg.seed,
            'patience': cfg.patience,
            'min_delta': cfg.min_delta,
            'plateau_factor': cfg.plateau_factor,
            'min_lr': cfg.min_lr,
            'commitment_beta': cfg.commitment_beta,
        })
        history = trainer.fit(train_set)
        save_params(params, self.path("model"))
        atomic_write_text(self.path("history"), history_to_csv(history))
        self._write_stamp("train")
        return load_params(self.path("model")), history

    def test_data(self) -> Tuple[Dataset, JointPmf]:
        cfg = self.config
        if self._reusable("test", "test", "qhat_test"):
            logger.info("Reusing test set")
            return load_dataset(self.path("test")), load_pmf_csv(self.path("qhat_test"))
        test_set = make_test_set(
            self.channel(), cfg.test_size, cfg.nr0, cfg.nrl, cfg.seed, shard_size=cfg.shard_size, n_jobs=cfg.n_jobs
        )
        save_dataset(test_set, self.path("test"))
        save_pmf_csv(test_set.joint(), self.path("qhat_test"))
        self._write_stamp("test")
        return test_set, load_pmf_csv(self.path("qhat_test"))

    def evaluate(self, params: NetworkParams, history: TrainingHistory) -> EvalReport:
        test_set, qhat_test = self.test_data()
        q_exact = self.target()
        result = evaluate(params, test_set, qhat_test, q_exact)

        exact_tvd_g = None
        try:
            exact = exact_synth_pmf(params, q_exact.marginal_x())
            exact_tvd_g = tvd(exact, q_exact)
            emit_heatmap(exact, self.output_dir / "heatmap_exact")
        except BudgetError as e:
            logger.info(f"Skipping exact synthesized PMF: {e}")

        emit_heatmap(result.synthesized, self.output_dir / "heatmap_synth")
        emit_heatmap(q_exact, self.output_dir / "heatmap_target")

        report = EvalReport(
            tvd_t=result.tvd_t,
            tvd_g=result.tvd_g,
            losses=history.losses,
            lr_trace=history.lr_trace,
            vq_errors=history.vq_errors,
            exact_tvd_g=exact_tvd_g,
            counts=dict(self.counts),
            config=self.config.echo(),
        )
        save_report(report, self.path("report"))
        return report

    def run(self) -> EvalReport:
        """Run every stage in order and return the report."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        add_json_file_handler(self.path("log"))
        try:
            logger.info(f"Running experiment in {self.output_dir} (resume={self.resume})")
            with stage("generate"):
                samples, qhat = self.generate()
            with stage("bins"):
                bins = self.build_bins(qhat)
            with stage("attach"):
                train_set = self.attach(samples, bins)
            with stage("train"):
                params, history = self.train(train_set)
            with stage("evaluate"):
                report = self.evaluate(params, history)
        finally:
            remove_json_file_handler()
        console.print(f"[bold green]✓ Experiment finished: TVD_T={report.tvd_t:.6f}, TVD_G={report.tvd_g:.6f}[/bold green]")
        return report


def run_experiment(config: ExperimentConfig, resume: bool = False) -> EvalReport:
    """Full pipeline: sample, estimate, bin, attach, train, evaluate."""
    return ExperimentRunner(config, resume=resume).run()
